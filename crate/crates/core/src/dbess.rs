//! The two-stage fixed-support procedure, the information criterion, and
//! the sweep over support sizes.
//!
//! Stage 1 repeatedly anchors the surrogate at the current iterate and
//! solves it with the splicing solver until the support stops changing.
//! Stage 2 broadcasts the stabilized support, fits restricted least squares
//! on every machine and averages the results.

use nalgebra::DVector;

use crate::cluster::{Cluster, CommLedger};
use crate::quadratic::IndexSet;
use crate::splicing::{default_tau, quad_splice, SplicingConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FixConfig {
    pub s: usize,
    /// Maximum number of stage-1 rounds.
    pub max_rounds: usize,
    /// Clamped to `s` when building the splicing configuration.
    pub c_max: usize,
    /// Splicing threshold; `None` selects [`default_tau`].
    pub tau: Option<f64>,
    pub max_splices: usize,
    /// Start each round's splicing from the previous round's support rather
    /// than from the initial one.
    pub warm_start: bool,
}

impl FixConfig {
    pub const DEFAULT_MAX_ROUNDS: usize = 10;

    pub fn new(s: usize) -> Self {
        FixConfig {
            s,
            max_rounds: Self::DEFAULT_MAX_ROUNDS,
            c_max: SplicingConfig::DEFAULT_C_MAX,
            tau: None,
            max_splices: SplicingConfig::DEFAULT_MAX_SPLICES,
            warm_start: true,
        }
    }

    pub fn with_support(&self, s: usize) -> Self {
        FixConfig { s, ..self.clone() }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.s == 0 || self.s > p {
            return Err(Error::InvalidConfig(format!("support size s = {} must lie in [1, p = {p}]", self.s)));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidConfig("max_rounds must be at least 1".into()));
        }
        if self.c_max == 0 {
            return Err(Error::InvalidConfig("c_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn splicing_config(&self, p: usize, n_total: usize) -> Result<SplicingConfig> {
        let tau = self.tau.unwrap_or_else(|| default_tau(self.s, p, n_total));
        SplicingConfig::new(self.s, self.c_max.min(self.s), tau, self.max_splices)
    }
}

/// One stage-1 round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based: round `t` produced `θ_t`.
    pub round: usize,
    pub active: IndexSet,
    /// Splicing solution of the surrogate (supported on `active`).
    pub theta: DVector<f64>,
    pub surrogate_loss: f64,
    pub splices: usize,
    /// Cumulative metered float slots after this round.
    pub comm_floats: usize,
}

impl RoundRecord {
    pub fn l2_error(&self, truth: &DVector<f64>) -> f64 {
        (&self.theta - truth).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixResult {
    pub theta_hat: DVector<f64>,
    pub active: IndexSet,
    pub rounds_used: usize,
    /// The support repeated before `max_rounds` ran out.
    pub stabilized: bool,
    pub trace: Vec<RoundRecord>,
    /// Rounds whose splicing solve hit `max_splices`.
    pub splicing_cap_hits: usize,
    pub comm: CommLedger,
}

impl FixResult {
    /// `‖θ_t − θ*‖₂` for each stage-1 round.
    pub fn error_trace(&self, truth: &DVector<f64>) -> Vec<f64> {
        self.trace.iter().map(|r| r.l2_error(truth)).collect()
    }
}

/// Initial support: the `s` largest `|θ₀|`, ties to the lower index (so an
/// all-zero `θ₀` gives `{0, …, s−1}`).
pub fn initial_active(theta0: &DVector<f64>, s: usize) -> IndexSet {
    IndexSet::top_abs(theta0, s)
}

/// Distributed best subset selection at a fixed support size.
pub fn dbess_fix(cluster: &Cluster, theta0: &DVector<f64>, config: &FixConfig) -> Result<FixResult> {
    let p = cluster.p();
    if theta0.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: theta0.len() });
    }
    config.validate(p)?;
    let splicing = config.splicing_config(p, cluster.n_total())?;

    let mut ledger = CommLedger::new();
    let first_active = initial_active(theta0, config.s);
    let mut active = first_active.clone();
    let mut theta = theta0.clone();
    let mut trace = Vec::new();
    let mut stabilized = false;
    let mut splicing_cap_hits = 0;

    for t in 0..config.max_rounds {
        let surrogate = cluster.surrogate_objective(&theta, t, &mut ledger)?;
        let start = if config.warm_start { &active } else { &first_active };
        let sol = quad_splice(&surrogate, start, &splicing)?;
        splicing_cap_hits += usize::from(sol.cap_reached);
        let next = sol.state.active;
        trace.push(RoundRecord {
            round: t + 1,
            active: next.clone(),
            theta: sol.state.theta.clone(),
            surrogate_loss: sol.state.loss,
            splices: sol.splices,
            comm_floats: ledger.total_floats(),
        });
        theta = sol.state.theta;
        let repeated = next == active;
        active = next;
        if repeated {
            stabilized = true;
            break;
        }
    }

    let rounds_used = trace.len();
    let theta_hat = cluster.restricted_ols_average(&active, rounds_used, &mut ledger)?;
    Ok(FixResult { theta_hat, active, rounds_used, stabilized, trace, splicing_cap_hits, comm: ledger })
}

/// `N ln RSS + ‖θ‖₀ ln p ln ln N`, natural logarithms. RSS is gathered with
/// one metered round.
pub fn gic(cluster: &Cluster, theta: &DVector<f64>, round: usize, ledger: &mut CommLedger) -> Result<f64> {
    let n_total = cluster.n_total();
    if n_total < 3 {
        return Err(Error::InvalidConfig(format!("information criterion needs N >= 3, got {n_total}")));
    }
    let rss = cluster.residual_sum_squares(theta, round, ledger)?;
    gic_from_rss(rss, theta.iter().filter(|v| **v != 0.0).count(), cluster.p(), n_total)
}

/// The criterion from its ingredients.
pub fn gic_from_rss(rss: f64, support: usize, p: usize, n_total: usize) -> Result<f64> {
    if !(rss > 0.0) {
        return Err(Error::DegenerateResidual { rss });
    }
    let n = n_total as f64;
    Ok(n * rss.ln() + support as f64 * (p as f64).ln() * n.ln().ln())
}

/// Default largest support size: `min(p − 1, ⌊n / ln p⌋, 50)`, at least 1.
pub fn default_s_max(p: usize, n_per_machine: usize) -> usize {
    let by_samples = if p > 1 { (n_per_machine as f64 / (p as f64).ln()).floor() as usize } else { 1 };
    p.saturating_sub(1).min(by_samples).clamp(1, 50)
}

/// A successful fit at one support size.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepFit {
    /// `-∞` when the fit interpolates the data exactly.
    pub gic: f64,
    pub fit: FixResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub s: usize,
    pub outcome: Result<SweepFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub s_min: usize,
    pub theta_selected: DVector<f64>,
    pub active_selected: IndexSet,
    /// All per-size ledgers, concatenated in order of `s`.
    pub comm: CommLedger,
}

impl SweepResult {
    pub fn selected(&self) -> &SweepFit {
        self.records
            .iter()
            .find(|r| r.s == self.s_min)
            .and_then(|r| r.outcome.as_ref().ok())
            .expect("selected support size has a successful fit")
    }
}

fn fit_and_score(cluster: &Cluster, theta0: &DVector<f64>, config: &FixConfig) -> Result<SweepFit> {
    let mut fit = dbess_fix(cluster, theta0, config)?;
    let round = fit.rounds_used + 1;
    let gic = match gic(cluster, &fit.theta_hat, round, &mut fit.comm) {
        Err(Error::DegenerateResidual { .. }) => f64::NEG_INFINITY,
        other => other?,
    };
    Ok(SweepFit { gic, fit })
}

/// Fits `s = 1, …, s_max` independently and selects the size minimizing the
/// information criterion; ties go to the smaller size.
pub fn dbess_sweep(cluster: &Cluster, theta0: &DVector<f64>, s_max: usize, template: &FixConfig) -> Result<SweepResult> {
    let p = cluster.p();
    if s_max == 0 || s_max >= p {
        return Err(Error::InvalidConfig(format!("s_max = {s_max} must lie in [1, p − 1 = {}]", p.saturating_sub(1))));
    }
    let records: Vec<SweepRecord> = cluster.execution().map_range(s_max, |i| {
        let s = i + 1;
        SweepRecord { s, outcome: fit_and_score(cluster, theta0, &template.with_support(s)) }
    });

    let mut comm = CommLedger::new();
    let mut best: Option<(usize, f64)> = None;
    for rec in &records {
        if let Ok(fit) = &rec.outcome {
            comm.extend(&fit.fit.comm);
            if best.is_none_or(|(_, g)| fit.gic < g) {
                best = Some((rec.s, fit.gic));
            }
        }
    }
    let Some((s_min, _)) = best else {
        let first = records
            .into_iter()
            .find_map(|r| r.outcome.err())
            .unwrap_or(Error::EmptyInput);
        return Err(Error::SweepFailed(Box::new(first)));
    };
    let chosen = &records[s_min - 1].outcome.as_ref().expect("selected fit").fit;
    let theta_selected = chosen.theta_hat.clone();
    let active_selected = chosen.active.clone();
    Ok(SweepResult { records, s_min, theta_selected, active_selected, comm })
}

/// Average of per-machine unrestricted least squares, used as `θ₀`.
pub fn oneshot_init(cluster: &Cluster, ledger: &mut CommLedger) -> Result<DVector<f64>> {
    cluster.oneshot_init(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{Direction, PayloadKind};
    use crate::{seed, Execution};
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn sparse_truth(p: usize, support: &[usize]) -> DVector<f64> {
        let mut t = DVector::zeros(p);
        for (k, &j) in support.iter().enumerate() {
            t[j] = if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        t
    }

    fn synthetic(rows: usize, p: usize, truth: &DVector<f64>, noise: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = seed::rng(seed);
        let x = DMatrix::from_fn(rows, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps = DVector::from_fn(rows, |_, _| noise * rng.sample::<f64, _>(StandardNormal));
        let y = &x * truth + eps;
        (x, y)
    }

    #[test]
    fn config_checks() {
        assert!(FixConfig::new(0).validate(10).is_err());
        assert!(FixConfig::new(11).validate(10).is_err());
        let mut c = FixConfig::new(3);
        c.max_rounds = 0;
        assert!(c.validate(10).is_err());
        let sc = FixConfig::new(1).splicing_config(10, 100).unwrap();
        assert_eq!(sc.c_max, 1);
        assert_eq!(FixConfig::new(1).max_rounds, 10);
    }

    #[test]
    fn initial_active_rules() {
        let t = DVector::from_vec(vec![0.1, -5.0, 2.0, 2.0]);
        assert_eq!(initial_active(&t, 2).as_slice(), &[1, 2]);
        assert_eq!(initial_active(&DVector::zeros(5), 3).as_slice(), &[0, 1, 2]);
    }

    #[test]
    fn noiseless_truth_start_recovers_in_one_round() {
        let p = 20;
        let truth = sparse_truth(p, &[2, 7, 11, 15]);
        let (x, y) = synthetic(400, p, &truth, 0.0, 1);
        let cluster = Cluster::from_data(&x, &y, 4, 2, Execution::Sequential).unwrap();
        let fit = dbess_fix(&cluster, &truth, &FixConfig::new(4)).unwrap();
        assert_eq!(fit.active.as_slice(), &[2, 7, 11, 15]);
        assert_eq!(fit.rounds_used, 1);
        assert!(fit.stabilized);
        assert!((&fit.theta_hat - &truth).amax() <= 1e-9);
    }

    #[test]
    fn single_machine_matches_centralized_splicing() {
        let p = 15;
        let truth = sparse_truth(p, &[0, 4, 9]);
        let (x, y) = synthetic(200, p, &truth, 1.0, 3);
        let cluster = Cluster::from_data(&x, &y, 1, 0, Execution::Sequential).unwrap();
        let theta0 = DVector::zeros(p);
        let config = FixConfig::new(3);
        let fit = dbess_fix(&cluster, &theta0, &config).unwrap();
        assert!(fit.comm.is_empty());

        // Centralized reference on pooled data: splicing on ½θᵀΣθ − wᵀθ,
        // iterated from the same start, then OLS on the support.
        let n = 200.0;
        let sigma = x.transpose() * &x / n;
        let w = x.transpose() * &y / n;
        let obj = crate::QuadraticObjective::new(sigma, -w).unwrap();
        let sc = config.splicing_config(p, 200).unwrap();
        let mut active = initial_active(&theta0, 3);
        for _ in 0..config.max_rounds {
            let next = quad_splice(&obj, &active, &sc).unwrap().state.active;
            if next == active {
                break;
            }
            active = next;
        }
        assert_eq!(fit.active, active);
        let xa = x.select_columns(active.as_slice());
        let ols = (xa.transpose() * &xa).cholesky().unwrap().solve(&(xa.transpose() * &y));
        for (r, &j) in active.iter().enumerate() {
            assert!((fit.theta_hat[j] - ols[r]).abs() <= 1e-10);
        }
    }

    #[test]
    fn fixed_point_is_idempotent_and_comm_is_exact() {
        let p = 30;
        let truth = sparse_truth(p, &[1, 5, 8, 20, 21]);
        let (x, y) = synthetic(600, p, &truth, 1.0, 4);
        let cluster = Cluster::from_data(&x, &y, 6, 1, Execution::Parallel).unwrap();
        let mut init_ledger = CommLedger::new();
        let theta0 = oneshot_init(&cluster, &mut init_ledger).unwrap();
        assert_eq!(init_ledger.floats(Some(Direction::Up), None), 5 * p);
        let config = FixConfig::new(5);
        let fit = dbess_fix(&cluster, &theta0, &config).unwrap();
        assert!(fit.stabilized);
        assert!(fit.theta_hat.iter().filter(|v| **v != 0.0).count() <= 5);
        assert_eq!(fit.active.len(), 5);

        let last = fit.trace.last().unwrap();
        let again = dbess_fix(&cluster, &last.theta, &config).unwrap();
        assert_eq!(again.trace[0].active, fit.active);

        let t1 = fit.rounds_used;
        assert_eq!(fit.comm.floats(Some(Direction::Up), Some(PayloadKind::Gradient)), t1 * 5 * p);
        assert_eq!(fit.comm.floats(Some(Direction::Up), Some(PayloadKind::LocalEstimate)), 5 * 5);
        assert_eq!(fit.comm.indices(Some(Direction::Down), Some(PayloadKind::ActiveSet)), 5 * 5);
    }

    #[test]
    fn gic_formula() {
        let p = 3;
        let x = DMatrix::from_fn(8, p, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let y = DVector::from_fn(8, |i, _| (i as f64).sin());
        let cluster = Cluster::from_data(&x, &y, 2, 0, Execution::Sequential).unwrap();
        let mut ledger = CommLedger::new();
        let zero = gic(&cluster, &DVector::zeros(p), 0, &mut ledger).unwrap();
        assert_eq!(zero, 8.0 * y.norm_squared().ln());

        let theta = DVector::from_vec(vec![0.2, 0.0, -0.4]);
        let got = gic(&cluster, &theta, 0, &mut ledger).unwrap();
        let rss = (&y - &x * &theta).norm_squared();
        let direct = 8.0 * rss.ln() + 2.0 * 3f64.ln() * 8f64.ln().ln();
        assert!((got - direct).abs() <= 1e-12 * direct.abs());

        assert_eq!(gic_from_rss(0.0, 1, 3, 8), Err(Error::DegenerateResidual { rss: 0.0 }));
    }

    #[test]
    fn default_s_max_rule() {
        assert_eq!(default_s_max(100, 500), 50);
        assert_eq!(default_s_max(100, 100), 21);
        assert_eq!(default_s_max(10, 10_000), 9);
        assert_eq!(default_s_max(2, 1), 1);
    }

    #[test]
    fn sweep_single_candidate_and_range_checks() {
        let p = 10;
        let truth = sparse_truth(p, &[6]);
        let (x, y) = synthetic(200, p, &truth, 0.5, 5);
        let cluster = Cluster::from_data(&x, &y, 2, 0, Execution::Sequential).unwrap();
        let theta0 = DVector::zeros(p);
        let sweep = dbess_sweep(&cluster, &theta0, 1, &FixConfig::new(1)).unwrap();
        assert_eq!(sweep.s_min, 1);
        assert_eq!(sweep.active_selected.as_slice(), &[6]);
        assert!(dbess_sweep(&cluster, &theta0, 0, &FixConfig::new(1)).is_err());
        assert!(dbess_sweep(&cluster, &theta0, p, &FixConfig::new(1)).is_err());
    }

    #[test]
    fn sweep_reports_per_size_failures() {
        // n = 4 rows per machine: sizes above 4 cannot be refit locally.
        let p = 8;
        let truth = sparse_truth(p, &[0, 3]);
        let (x, y) = synthetic(16, p, &truth, 0.1, 6);
        let cluster = Cluster::from_data(&x, &y, 4, 0, Execution::Sequential).unwrap();
        let sweep = dbess_sweep(&cluster, &DVector::zeros(p), 6, &FixConfig::new(1)).unwrap();
        assert!(sweep.records[5].outcome.is_err());
        assert!(sweep.records[0].outcome.is_ok());
        assert!(sweep.s_min <= 4);
    }

    #[test]
    fn sweep_is_scale_invariant() {
        let p = 12;
        let truth = sparse_truth(p, &[1, 4, 9]);
        let (x, y) = synthetic(300, p, &truth, 1.0, 7);
        let base = Cluster::from_data(&x, &y, 3, 0, Execution::Parallel).unwrap();
        let scaled = Cluster::from_data(&x, &(&y * 7.5), 3, 0, Execution::Parallel).unwrap();
        let a = dbess_sweep(&base, &DVector::zeros(p), 6, &FixConfig::new(1)).unwrap();
        let b = dbess_sweep(&scaled, &DVector::zeros(p), 6, &FixConfig::new(1)).unwrap();
        assert_eq!(a.s_min, b.s_min);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            let (ga, gb) = (ra.outcome.as_ref().unwrap().gic, rb.outcome.as_ref().unwrap().gic);
            assert!((gb - ga - 2.0 * 300.0 * 7.5f64.ln()).abs() <= 1e-8 * ga.abs().max(1.0));
        }
    }

    #[test]
    fn low_noise_sweep_finds_true_size() {
        let p = 20;
        let truth = sparse_truth(p, &[3, 8, 13, 17]);
        let (x, y) = synthetic(800, p, &truth, 1e-3, 8);
        let cluster = Cluster::from_data(&x, &y, 4, 0, Execution::Parallel).unwrap();
        let mut ledger = CommLedger::new();
        let theta0 = oneshot_init(&cluster, &mut ledger).unwrap();
        let sweep = dbess_sweep(&cluster, &theta0, 8, &FixConfig::new(1)).unwrap();
        let gics: Vec<f64> = sweep.records.iter().map(|r| r.outcome.as_ref().unwrap().gic).collect();
        // Below the true size every omitted coefficient costs O(N) in the
        // first term, so the criterion falls steeply up to s* = 4.
        for s in 1..4 {
            assert!(gics[s] < gics[s - 1] - 100.0);
        }
        assert!(sweep.s_min >= 4);
        let truth_set = IndexSet::support(&truth);
        assert_eq!(sweep.active_selected.intersection_len(&truth_set), 4);
        let at_truth = &sweep.records[3].outcome.as_ref().unwrap().fit;
        assert_eq!(at_truth.active, truth_set);
    }

    #[test]
    fn sequential_and_parallel_sweeps_agree() {
        let p = 15;
        let truth = sparse_truth(p, &[0, 2, 5]);
        let (x, y) = synthetic(300, p, &truth, 1.0, 9);
        let seq = Cluster::from_data(&x, &y, 3, 1, Execution::Sequential).unwrap();
        let par = seq.clone().with_execution(Execution::Parallel);
        let a = dbess_sweep(&seq, &DVector::zeros(p), 6, &FixConfig::new(1)).unwrap();
        let b = dbess_sweep(&par, &DVector::zeros(p), 6, &FixConfig::new(1)).unwrap();
        assert_eq!(a, b);
    }
}
