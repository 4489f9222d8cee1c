//! The five commands. Each writes one report into `out` and returns its
//! path; every report starts with the header line from
//! [`RunConfig::header_line`].

use std::fs;
use std::path::{Path, PathBuf};

use dbess::cluster::{Cluster, CommLedger, Direction};
use dbess::datagen::SyntheticDataset;
use dbess::dbess::{dbess_fix, dbess_sweep, default_s_max};
use dbess::experiment::{run_replicates, summarize, FitMode, Init, MeanStd};
use dbess::metrics::{evaluate, RecoveryReport};
use dbess::seed::{self, Stream};
use dbess::Execution;
use nalgebra::{DMatrix, DVector};

use crate::config::{InitChoice, RunConfig};
use crate::dataset::{self, fmt_f64, DatasetMeta};
use crate::error::{CliError, CliResult};

pub const FIT_HEADER: [&str; 3] = ["field", "index", "value"];
pub const SWEEP_HEADER: [&str; 13] =
    ["s", "gic", "tpr", "tnr", "mcc", "see", "see_squared", "reee", "rounds", "comm_floats", "selected", "failed", "error"];
pub const BENCH_HEADER: [&str; 25] = [
    "m",
    "method",
    "replicates",
    "failed",
    "failure_rate",
    "tpr_mean",
    "tpr_std",
    "tnr_mean",
    "tnr_std",
    "mcc_mean",
    "mcc_std",
    "see_mean",
    "see_std",
    "see_squared_mean",
    "see_squared_std",
    "reee_mean",
    "reee_std",
    "s_selected_mean",
    "s_selected_std",
    "rounds_mean",
    "rounds_std",
    "comm_floats_mean",
    "comm_floats_std",
    "first_error",
    "first_error_replicate",
];
pub const CONVERGENCE_HEADER: [&str; 9] = [
    "replicate",
    "init",
    "round",
    "l2_error",
    "surrogate_loss",
    "comm_floats",
    "init_l2_error",
    "final_l2_error",
    "error",
];

/// A CSV report under construction.
struct Report {
    header: String,
    rows: csv::Writer<Vec<u8>>,
}

impl Report {
    fn new(config: &RunConfig, command: &str, columns: &[&str]) -> Self {
        let mut rows = csv::Writer::from_writer(Vec::new());
        rows.write_record(columns).expect("in-memory write");
        Report { header: config.header_line(command), rows }
    }

    fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.rows.write_record(fields).expect("in-memory write");
    }

    fn finish(self, path: &Path) -> CliResult<PathBuf> {
        let body = self.rows.into_inner().expect("in-memory flush");
        let mut bytes = self.header.into_bytes();
        bytes.push(b'\n');
        bytes.extend_from_slice(&body);
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        Ok(path.to_path_buf())
    }
}

fn ensure_out(config: &RunConfig) -> CliResult<&Path> {
    fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    Ok(&config.out)
}

fn generate(config: &RunConfig) -> CliResult<SyntheticDataset> {
    Ok(SyntheticDataset::generate(&config.design(), config.n_total, config.s_star, config.seed)?)
}

pub fn cmd_gen(config: &RunConfig) -> CliResult<PathBuf> {
    config.validate()?;
    let out = ensure_out(config)?;
    let data = generate(config)?;
    let csv_path = out.join("dataset.csv");
    dataset::write_csv(&csv_path, &data.x, &data.y)?;
    dataset::write_meta(&dataset::meta_path(&csv_path), &DatasetMeta::of(&data, config.hash()))?;
    Ok(csv_path)
}

struct Loaded {
    x: DMatrix<f64>,
    y: DVector<f64>,
    truth: Option<DVector<f64>>,
    /// The config with `n_total`, `p` and (when known) the design taken from
    /// the dataset.
    config: RunConfig,
}

fn load(config: &RunConfig) -> CliResult<Loaded> {
    let mut config = config.clone();
    let Some(path) = config.data.clone() else {
        config.validate()?;
        let data = generate(&config)?;
        return Ok(Loaded { x: data.x, y: data.y, truth: Some(data.theta_star), config });
    };
    let (x, y) = dataset::read_csv(&path)?;
    let meta = dataset::read_meta(&dataset::meta_path(&path))?;
    config.n_total = x.nrows();
    config.p = x.ncols();
    let truth = match &meta {
        Some(meta) => {
            if (meta.n_total, meta.p) != (x.nrows(), x.ncols()) {
                return Err(CliError::Dataset(format!(
                    "{}: metadata says {}x{}, file has {}x{}",
                    path.display(),
                    meta.n_total,
                    meta.p,
                    x.nrows(),
                    x.ncols()
                )));
            }
            config.structure = meta.design.structure;
            config.rho = meta.design.rho;
            config.spike = meta.design.spike.clone();
            config.s_star = meta.s_star;
            Some(meta.theta_star()?)
        }
        None => None,
    };
    if truth.is_none() {
        config.s_star = config.s_star.min(config.p);
    }
    config.validate()?;
    Ok(Loaded { x, y, truth, config })
}

fn build_cluster(loaded: &Loaded) -> CliResult<Cluster> {
    let part = seed::stream_seed(loaded.config.seed, Stream::Partition);
    Ok(Cluster::from_data(&loaded.x, &loaded.y, loaded.config.machines, part, Execution::default())?)
}

fn initialize(cluster: &Cluster, init: Init, ledger: &mut CommLedger) -> CliResult<DVector<f64>> {
    Ok(match init {
        Init::Zero => DVector::zeros(cluster.p()),
        Init::Oneshot => cluster.oneshot_init(ledger)?,
    })
}

fn metric_fields(report: Option<&RecoveryReport>) -> [String; 6] {
    match report {
        Some(r) => [
            fmt_f64(r.rates.tpr),
            fmt_f64(r.rates.tnr),
            fmt_f64(r.rates.mcc),
            fmt_f64(r.errors.see),
            fmt_f64(r.errors.see_squared),
            fmt_f64(r.errors.reee),
        ],
        None => Default::default(),
    }
}

pub fn cmd_fit(config: &RunConfig) -> CliResult<PathBuf> {
    let loaded = load(config)?;
    let cfg = &loaded.config;
    let s = cfg.s.ok_or_else(|| CliError::Config("fit needs a fixed support size s".into()))?;
    let init = cfg.single_init()?;
    let out = ensure_out(cfg)?;
    let cluster = build_cluster(&loaded)?;
    let mut comm = CommLedger::new();
    let theta0 = initialize(&cluster, init, &mut comm)?;
    let fit = dbess_fix(&cluster, &theta0, &cfg.fix_template().with_support(s))?;
    comm.extend(&fit.comm);

    let mut report = Report::new(cfg, "fit", &FIT_HEADER);
    let scalar = |report: &mut Report, name: &str, value: String| report.row([name, "", value.as_str()]);
    scalar(&mut report, "s", s.to_string());
    scalar(&mut report, "rounds_used", fit.rounds_used.to_string());
    scalar(&mut report, "stabilized", u8::from(fit.stabilized).to_string());
    scalar(&mut report, "splicing_cap_hits", fit.splicing_cap_hits.to_string());
    scalar(&mut report, "comm_floats_up", comm.floats(Some(Direction::Up), None).to_string());
    scalar(&mut report, "comm_floats_down", comm.floats(Some(Direction::Down), None).to_string());
    scalar(&mut report, "comm_indices", comm.indices(None, None).to_string());
    scalar(&mut report, "comm_floats_total", comm.total_floats().to_string());
    if let Some(truth) = &loaded.truth {
        let r = evaluate(&fit.theta_hat, &fit.active, truth)?;
        let names = ["tpr", "tnr", "mcc", "see", "see_squared", "reee"];
        for (name, value) in names.into_iter().zip(metric_fields(Some(&r))) {
            scalar(&mut report, name, value);
        }
    }
    for &j in fit.active.iter() {
        report.row(["active", &j.to_string(), "1"]);
    }
    for (j, v) in fit.theta_hat.iter().enumerate().filter(|(_, v)| **v != 0.0) {
        report.row(["theta", &j.to_string(), &fmt_f64(*v)]);
    }
    report.finish(&out.join("fit.csv"))
}

pub fn cmd_sweep(config: &RunConfig) -> CliResult<PathBuf> {
    let loaded = load(config)?;
    let cfg = &loaded.config;
    let init = cfg.single_init()?;
    let out = ensure_out(cfg)?;
    let cluster = build_cluster(&loaded)?;
    let mut comm = CommLedger::new();
    let theta0 = initialize(&cluster, init, &mut comm)?;
    let s_max = cfg.s_max.unwrap_or_else(|| default_s_max(cfg.p, cluster.n()));
    let sweep = dbess_sweep(&cluster, &theta0, s_max, &cfg.fix_template())?;

    let mut report = Report::new(cfg, "sweep", &SWEEP_HEADER);
    for rec in &sweep.records {
        let selected = u8::from(rec.s == sweep.s_min).to_string();
        match &rec.outcome {
            Ok(fit) => {
                let scored = match &loaded.truth {
                    Some(truth) => Some(evaluate(&fit.fit.theta_hat, &fit.fit.active, truth)?),
                    None => None,
                };
                let [tpr, tnr, mcc, see, see2, reee] = metric_fields(scored.as_ref());
                report.row([
                    rec.s.to_string(),
                    fmt_f64(fit.gic),
                    tpr,
                    tnr,
                    mcc,
                    see,
                    see2,
                    reee,
                    fit.fit.rounds_used.to_string(),
                    fit.fit.comm.total_floats().to_string(),
                    selected,
                    "0".into(),
                    String::new(),
                ]);
            }
            Err(e) => {
                let mut fields = vec![rec.s.to_string()];
                fields.extend(std::iter::repeat_n(String::new(), 9));
                fields.extend([selected, "1".into(), e.to_string()]);
                report.row(fields);
            }
        }
    }
    report.finish(&out.join("sweep.csv"))
}

fn mean_std(v: MeanStd) -> [String; 2] {
    [fmt_f64(v.mean), fmt_f64(v.std)]
}

pub fn cmd_bench(config: &RunConfig) -> CliResult<PathBuf> {
    config.validate()?;
    let init = config.single_init()?;
    let out = ensure_out(config)?;
    let mode = match config.s {
        Some(s) => FitMode::Fixed(s),
        None => FitMode::Sweep(config.s_max),
    };
    let mut report = Report::new(config, "bench", &BENCH_HEADER);
    for m in config.machine_counts() {
        let scenario = config.scenario(m, init, mode)?;
        let outcomes = run_replicates(&scenario, config.seed, config.replicates, Execution::default());
        let summary = summarize(&outcomes);
        let first_error = outcomes.iter().enumerate().find_map(|(r, o)| o.as_ref().err().map(|e| (r, e.to_string())));
        let mut fields = vec![
            m.to_string(),
            "DBESS".to_string(),
            summary.replicates.to_string(),
            summary.failed.to_string(),
            fmt_f64(summary.failure_rate()),
        ];
        for stat in [
            summary.tpr,
            summary.tnr,
            summary.mcc,
            summary.see,
            summary.see_squared,
            summary.reee,
            summary.s_selected,
            summary.rounds,
            summary.comm_floats,
        ] {
            fields.extend(mean_std(stat));
        }
        match first_error {
            Some((r, e)) => fields.extend([e, r.to_string()]),
            None => fields.extend([String::new(), String::new()]),
        }
        report.row(fields);
    }
    report.finish(&out.join("bench.csv"))
}

pub fn cmd_convergence(config: &RunConfig) -> CliResult<PathBuf> {
    config.validate()?;
    let out = ensure_out(config)?;
    let s = config.s.unwrap_or(config.s_star);
    let mut report = Report::new(config, "convergence", &CONVERGENCE_HEADER);
    for init in config.init.modes() {
        let scenario = config.scenario(config.machines, init, FitMode::Fixed(s))?;
        let label = InitChoice::label(init);
        let outcomes = run_replicates(&scenario, config.seed, config.replicates, Execution::default());
        for (r, outcome) in outcomes.iter().enumerate() {
            match outcome {
                Ok(o) => {
                    let init_err = fmt_f64(o.init_error);
                    let final_err = fmt_f64(o.report.errors.see);
                    for t in &o.trace {
                        report.row([
                            r.to_string(),
                            label.to_string(),
                            t.round.to_string(),
                            fmt_f64(t.l2_error),
                            fmt_f64(t.surrogate_loss),
                            t.comm_floats.to_string(),
                            init_err.clone(),
                            final_err.clone(),
                            String::new(),
                        ]);
                    }
                }
                Err(e) => {
                    let mut fields = vec![r.to_string(), label.to_string()];
                    fields.extend(std::iter::repeat_n(String::new(), 6));
                    fields.push(e.to_string());
                    report.row(fields);
                }
            }
        }
    }
    report.finish(&out.join("convergence.csv"))
}
