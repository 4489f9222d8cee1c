//! Run configuration: one JSON record, optionally overridden from the
//! command line, validated before any computation.

use std::fs;
use std::path::{Path, PathBuf};

use dbess::datagen::{DesignSpec, Structure};
use dbess::dbess::FixConfig;
use dbess::experiment::{FitMode, Init, Scenario};
use dbess::splicing::SplicingConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InitChoice {
    Zero,
    Oneshot,
    /// Run both initializations (convergence traces only).
    Both,
}

impl InitChoice {
    pub fn modes(self) -> Vec<Init> {
        match self {
            InitChoice::Zero => vec![Init::Zero],
            InitChoice::Oneshot => vec![Init::Oneshot],
            InitChoice::Both => vec![Init::Zero, Init::Oneshot],
        }
    }

    pub fn label(init: Init) -> &'static str {
        match init {
            Init::Zero => "zero",
            Init::Oneshot => "oneshot",
        }
    }
}

/// Everything a command needs. `out` and `jobs` change where and how fast
/// results are produced, never their content, so they are neither hashed
/// nor echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_total: usize,
    pub machines: usize,
    /// Machine counts for `bench`; empty means `[machines]`.
    pub bench_machines: Vec<usize>,
    pub p: usize,
    pub s_star: usize,
    pub structure: Structure,
    pub rho: f64,
    pub spike: Vec<f64>,
    pub seed: u64,
    pub replicates: usize,
    pub init: InitChoice,
    /// Fixed support size. When absent, `bench` sweeps and `convergence`
    /// uses `s_star`.
    pub s: Option<usize>,
    pub s_max: Option<usize>,
    pub max_rounds: usize,
    pub c_max: usize,
    pub tau: Option<f64>,
    pub max_splices: usize,
    /// Dataset CSV for `fit` and `sweep`; generated from the seed when absent.
    pub data: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub out: PathBuf,
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_total: 10_000,
            machines: 20,
            bench_machines: Vec::new(),
            p: 100,
            s_star: 10,
            structure: Structure::Correlated,
            rho: DesignSpec::DEFAULT_RHO,
            spike: DesignSpec::DEFAULT_SPIKE.to_vec(),
            seed: 0,
            replicates: 50,
            init: InitChoice::Oneshot,
            s: None,
            s_max: None,
            max_rounds: FixConfig::DEFAULT_MAX_ROUNDS,
            c_max: SplicingConfig::DEFAULT_C_MAX,
            tau: None,
            max_splices: SplicingConfig::DEFAULT_MAX_SPLICES,
            data: None,
            out: PathBuf::from("out"),
            jobs: None,
        }
    }
}

const CONFIG_MARKER: &str = " config=";

impl RunConfig {
    /// Reads a JSON config, or the config embedded in the first line of a
    /// report written by this tool.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let json = match text.lines().next() {
            Some(first) if first.starts_with('#') => first
                .find(CONFIG_MARKER)
                .map(|at| &first[at + CONFIG_MARKER.len()..])
                .ok_or_else(|| CliError::Config(format!("{}: report header has no embedded config", path.display())))?,
            _ => text.as_str(),
        };
        serde_json::from_str(json).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn design(&self) -> DesignSpec {
        DesignSpec { p: self.p, structure: self.structure, rho: self.rho, spike: self.spike.clone() }
    }

    pub fn fix_template(&self) -> FixConfig {
        FixConfig {
            s: 1,
            max_rounds: self.max_rounds,
            c_max: self.c_max,
            tau: self.tau,
            max_splices: self.max_splices,
            warm_start: true,
        }
    }

    pub fn machine_counts(&self) -> Vec<usize> {
        if self.bench_machines.is_empty() {
            vec![self.machines]
        } else {
            self.bench_machines.clone()
        }
    }

    /// A single-initialization scenario; `Both` is only meaningful to the
    /// convergence command, which builds its scenarios itself.
    pub fn scenario(&self, machines: usize, init: Init, mode: FitMode) -> CliResult<Scenario> {
        let scenario = Scenario {
            n_total: self.n_total,
            machines,
            design: self.design(),
            s_star: self.s_star,
            init,
            mode,
            fix: self.fix_template(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn single_init(&self) -> CliResult<Init> {
        match self.init {
            InitChoice::Zero => Ok(Init::Zero),
            InitChoice::Oneshot => Ok(Init::Oneshot),
            InitChoice::Both => Err(CliError::Config("init = both is only supported by the convergence command".into())),
        }
    }

    /// Checks that do not depend on the command.
    pub fn validate(&self) -> CliResult<()> {
        self.design().validate()?;
        if self.machines == 0 || !self.n_total.is_multiple_of(self.machines) {
            return Err(CliError::Config(format!("m = {} must divide N = {}", self.machines, self.n_total)));
        }
        if let Some(&m) = self.bench_machines.iter().find(|&&m| m == 0 || !self.n_total.is_multiple_of(m)) {
            return Err(CliError::Config(format!("bench machine count {m} must divide N = {}", self.n_total)));
        }
        if self.s_star == 0 || self.s_star > self.p {
            return Err(CliError::Config(format!("s_star = {} must lie in [1, p = {}]", self.s_star, self.p)));
        }
        if let Some(s) = self.s {
            if s == 0 || s > self.p {
                return Err(CliError::Config(format!("s = {s} must lie in [1, p = {}]", self.p)));
            }
        }
        if let Some(s_max) = self.s_max {
            if s_max == 0 || s_max >= self.p {
                return Err(CliError::Config(format!("s_max = {s_max} must lie in [1, p - 1 = {}]", self.p - 1)));
            }
        }
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        self.fix_template().validate(self.p)?;
        Ok(())
    }

    /// Compact JSON of every content-affecting field.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// First line of every report.
    pub fn header_line(&self, command: &str) -> String {
        format!("# dbess {command} config_hash={} seed={}{CONFIG_MARKER}{}", self.hash(), self.seed, self.canonical_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips_through_load() {
        let mut cfg = RunConfig { seed: 42, s: Some(3), tau: Some(0.25), ..RunConfig::default() };
        cfg.out = PathBuf::from("/elsewhere");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        fs::write(&path, format!("{}\na,b\n", cfg.header_line("bench"))).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back.canonical_json(), cfg.canonical_json());
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(back.out, PathBuf::from("out"));
    }

    #[test]
    fn out_and_jobs_do_not_change_the_hash() {
        let a = RunConfig::default();
        let b = RunConfig { out: PathBuf::from("x"), jobs: Some(3), ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 1, ..RunConfig::default() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn validation_names_the_constraint() {
        let err = RunConfig { n_total: 1001, ..RunConfig::default() }.validate().unwrap_err();
        assert!(err.to_string().contains("must divide"), "{err}");
        let err = RunConfig { s: Some(101), ..RunConfig::default() }.validate().unwrap_err();
        assert!(err.to_string().contains("s = 101"), "{err}");
        assert!(RunConfig { s_max: Some(100), ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"n_total": 100, "snr": 2}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
        fs::write(&path, r#"{"n_total": 100, "machines": 4, "out": "res"}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!((cfg.n_total, cfg.machines, cfg.p), (100, 4, 100));
        assert_eq!(cfg.out, PathBuf::from("res"));
    }
}
