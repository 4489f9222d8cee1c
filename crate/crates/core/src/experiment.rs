//! Replicated synthetic studies: generate a dataset, distribute it, fit,
//! and score against the known truth.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, CommLedger};
use crate::datagen::{DesignSpec, SyntheticDataset};
use crate::dbess::{dbess_fix, dbess_sweep, default_s_max, FixConfig, FixResult};
use crate::metrics::{evaluate, RecoveryReport};
use crate::quadratic::IndexSet;
use crate::seed::{self, Stream};
use crate::{Error, Execution, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zero,
    Oneshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Fixed support size.
    Fixed(usize),
    /// Information-criterion sweep over `1..=s_max` (default rule when
    /// `None`).
    Sweep(Option<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_total: usize,
    pub machines: usize,
    pub design: DesignSpec,
    pub s_star: usize,
    pub init: Init,
    pub mode: FitMode,
    /// Template for per-size fits; its `s` is overridden.
    pub fix: FixConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        let p = self.design.p;
        if self.machines == 0 || self.n_total == 0 || !self.n_total.is_multiple_of(self.machines) {
            return Err(Error::IndivisibleN { rows: self.n_total, machines: self.machines });
        }
        if self.s_star == 0 || self.s_star > p {
            return Err(Error::InvalidConfig(format!("s* = {} must lie in [1, p = {p}]", self.s_star)));
        }
        let n = self.n_total / self.machines;
        if self.init == Init::Oneshot && n <= p {
            return Err(Error::InvalidConfig(format!(
                "one-shot initialization needs n = N/m > p (n = {n}, p = {p})"
            )));
        }
        match self.mode {
            FitMode::Fixed(s) if s == 0 || s > p => {
                Err(Error::InvalidConfig(format!("support size s = {s} must lie in [1, p = {p}]")))
            }
            FitMode::Sweep(Some(s_max)) if s_max == 0 || s_max >= p => {
                Err(Error::InvalidConfig(format!("s_max = {s_max} must lie in [1, p − 1]")))
            }
            _ => self.fix.with_support(1).validate(p),
        }
    }

    pub fn p(&self) -> usize {
        self.design.p
    }

    pub fn n_per_machine(&self) -> usize {
        self.n_total / self.machines
    }
}

/// One stage-1 round against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub round: usize,
    pub l2_error: f64,
    pub surrogate_loss: f64,
    pub comm_floats: usize,
}

/// Per-size information criterion from a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GicPoint {
    pub s: usize,
    pub gic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub seed: u64,
    pub theta_star: DVector<f64>,
    pub theta_init: DVector<f64>,
    pub theta_hat: DVector<f64>,
    pub active: IndexSet,
    pub s_selected: usize,
    pub report: RecoveryReport,
    /// `‖θ₀ − θ*‖₂`.
    pub init_error: f64,
    pub rounds_used: usize,
    pub stabilized: bool,
    pub trace: Vec<TracePoint>,
    pub gic_path: Vec<GicPoint>,
    /// Float slots metered during initialization and fitting.
    pub comm_floats: usize,
    pub comm: CommLedger,
}

fn trace_of(fit: &FixResult, truth: &DVector<f64>, offset: usize) -> Vec<TracePoint> {
    fit.trace
        .iter()
        .map(|r| TracePoint {
            round: r.round,
            l2_error: r.l2_error(truth),
            surrogate_loss: r.surrogate_loss,
            comm_floats: offset + r.comm_floats,
        })
        .collect()
}

/// Runs replicate `replicate` of `scenario`. The replicate's randomness is
/// fully determined by `(base_seed, replicate)`.
pub fn run_replicate(scenario: &Scenario, base_seed: u64, replicate: usize, exec: Execution) -> Result<ReplicateOutcome> {
    scenario.validate()?;
    let seed = seed::replicate_seed(base_seed, replicate as u64);
    let data = SyntheticDataset::generate(&scenario.design, scenario.n_total, scenario.s_star, seed)?;
    let cluster = Cluster::from_data(&data.x, &data.y, scenario.machines, seed::stream_seed(seed, Stream::Partition), exec)?;
    run_on_cluster(scenario, &cluster, &data.theta_star, replicate, seed)
}

/// Fits a prepared cluster according to `scenario`'s init and mode.
pub fn run_on_cluster(
    scenario: &Scenario,
    cluster: &Cluster,
    truth: &DVector<f64>,
    replicate: usize,
    seed: u64,
) -> Result<ReplicateOutcome> {
    let p = cluster.p();
    let mut comm = CommLedger::new();
    let theta_init = match scenario.init {
        Init::Zero => DVector::zeros(p),
        Init::Oneshot => cluster.oneshot_init(&mut comm)?,
    };
    let init_floats = comm.total_floats();
    let (fit, gic_path) = match scenario.mode {
        FitMode::Fixed(s) => (dbess_fix(cluster, &theta_init, &scenario.fix.with_support(s))?, Vec::new()),
        FitMode::Sweep(s_max) => {
            let s_max = s_max.unwrap_or_else(|| default_s_max(p, cluster.n()));
            let sweep = dbess_sweep(cluster, &theta_init, s_max, &scenario.fix)?;
            let path = sweep
                .records
                .iter()
                .map(|r| GicPoint { s: r.s, gic: r.outcome.as_ref().ok().map(|f| f.gic) })
                .collect();
            // Ledger: initialization, then the whole sweep.
            comm.extend(&sweep.comm);
            let fit = sweep.selected().fit.clone();
            (fit, path)
        }
    };
    if matches!(scenario.mode, FitMode::Fixed(_)) {
        comm.extend(&fit.comm);
    }
    let report = evaluate(&fit.theta_hat, &fit.active, truth)?;
    Ok(ReplicateOutcome {
        replicate,
        seed,
        theta_star: truth.clone(),
        init_error: (&theta_init - truth).norm(),
        theta_init,
        theta_hat: fit.theta_hat.clone(),
        active: fit.active.clone(),
        s_selected: fit.active.len(),
        report,
        rounds_used: fit.rounds_used,
        stabilized: fit.stabilized,
        trace: trace_of(&fit, truth, init_floats),
        gic_path,
        comm_floats: comm.total_floats(),
        comm,
    })
}

/// Runs `count` replicates; results are in replicate order whatever the
/// schedule.
pub fn run_replicates(
    scenario: &Scenario,
    base_seed: u64,
    count: usize,
    exec: Execution,
) -> Vec<Result<ReplicateOutcome>> {
    exec.map_range(count, |r| run_replicate(scenario, base_seed, r, exec))
}

/// Sample mean and standard deviation (`n − 1` denominator; 0 for a single
/// value).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub replicates: usize,
    pub failed: usize,
    pub tpr: MeanStd,
    pub tnr: MeanStd,
    pub mcc: MeanStd,
    pub see: MeanStd,
    pub see_squared: MeanStd,
    pub reee: MeanStd,
    pub s_selected: MeanStd,
    pub rounds: MeanStd,
    pub comm_floats: MeanStd,
}

impl Summary {
    pub fn failure_rate(&self) -> f64 {
        if self.replicates == 0 {
            0.0
        } else {
            self.failed as f64 / self.replicates as f64
        }
    }
}

/// Aggregates successful replicates; failures are counted and excluded.
pub fn summarize(outcomes: &[Result<ReplicateOutcome>]) -> Summary {
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let col = |f: &dyn Fn(&ReplicateOutcome) -> f64| MeanStd::of(&ok.iter().map(|o| f(o)).collect::<Vec<_>>());
    Summary {
        replicates: outcomes.len(),
        failed: outcomes.len() - ok.len(),
        tpr: col(&|o| o.report.rates.tpr),
        tnr: col(&|o| o.report.rates.tnr),
        mcc: col(&|o| o.report.rates.mcc),
        see: col(&|o| o.report.errors.see),
        see_squared: col(&|o| o.report.errors.see_squared),
        reee: col(&|o| o.report.errors.reee),
        s_selected: col(&|o| o.s_selected as f64),
        rounds: col(&|o| o.rounds_used as f64),
        comm_floats: col(&|o| o.comm_floats as f64),
    }
}
