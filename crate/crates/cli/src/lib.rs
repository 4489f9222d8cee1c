//! Command-line experiment runner: dataset generation, fixed-size fits,
//! information-criterion sweeps, replicated benchmarks and convergence
//! traces, all written as deterministic CSV.

pub mod commands;
pub mod config;
pub mod dataset;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dbess::datagen::Structure;

pub use config::{InitChoice, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "dbess", version, about = "Distributed best subset selection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its metadata.
    Gen,
    /// Fit one support size.
    Fit,
    /// Fit every support size up to s_max and select by information criterion.
    Sweep,
    /// Aggregate recovery metrics over seeded replicates.
    Bench,
    /// Per-round estimation error traces.
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Fit => "fit",
            Command::Sweep => "sweep",
            Command::Bench => "bench",
            Command::Convergence => "convergence",
        }
    }
}

fn parse_structure(s: &str) -> Result<Structure, String> {
    match s {
        "uncorrelated" => Ok(Structure::Uncorrelated),
        "correlated" => Ok(Structure::Correlated),
        _ => Err(format!("expected uncorrelated or correlated, got {s:?}")),
    }
}

/// Flags win over values from `--config`.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON config file, or a report produced by this tool.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Total sample size N.
    #[arg(long = "n", global = true)]
    pub n_total: Option<usize>,
    /// Number of machines m.
    #[arg(long = "m", global = true)]
    pub machines: Option<usize>,
    /// Comma-separated machine counts for bench.
    #[arg(long, global = true, value_delimiter = ',')]
    pub bench_machines: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub p: Option<usize>,
    #[arg(long, global = true)]
    pub s_star: Option<usize>,
    #[arg(long, global = true, value_parser = parse_structure)]
    pub structure: Option<Structure>,
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub spike: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub init: Option<InitChoice>,
    #[arg(long, global = true)]
    pub s: Option<usize>,
    #[arg(long, global = true)]
    pub s_max: Option<usize>,
    /// Maximum stage-1 rounds T.
    #[arg(long, global = true)]
    pub max_rounds: Option<usize>,
    #[arg(long, global = true)]
    pub c_max: Option<usize>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub max_splices: Option<usize>,
    /// Dataset CSV for fit and sweep.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
}

impl Overrides {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone();
                }
            )*};
        }
        set!(seed, out, n_total, machines, bench_machines, p, s_star, structure, rho, spike, replicates, init, max_rounds, c_max, max_splices);
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    c.$field = self.$field.clone();
                }
            )*};
        }
        set_opt!(jobs, s, s_max, tau, data);
        Ok(c)
    }
}

pub fn run_command(command: Command, config: &RunConfig) -> CliResult<PathBuf> {
    let go = || match command {
        Command::Gen => commands::cmd_gen(config),
        Command::Fit => commands::cmd_fit(config),
        Command::Sweep => commands::cmd_sweep(config),
        Command::Bench => commands::cmd_bench(config),
        Command::Convergence => commands::cmd_convergence(config),
    };
    with_jobs(config.jobs, go)
}

#[cfg(feature = "parallel")]
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match jobs {
        Some(0) => Err(CliError::Config("jobs must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {k} worker threads: {e}")))?
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<T: Send>(_jobs: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    f()
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> CliResult<PathBuf>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    let config = cli.overrides.resolve()?;
    run_command(cli.command, &config)
}
