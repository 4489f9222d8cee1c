//! A simulated cluster: `m` machines with equal-size data shards, their
//! sufficient statistics, and a ledger of every cross-machine message.
//!
//! Machine 0 is the coordinator. Only messages between the coordinator and
//! machines `1..m` are metered, so a single-machine cluster never records
//! traffic.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::quadratic::{spd_solve, IndexSet, QuadraticObjective};
use crate::{seed, Error, Execution, Result};

/// One machine's rows of the design and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub machine_id: usize,
}

impl Shard {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// `Σ_k = XᵀX/n`, `w_k = Xᵀy/n` and `Σy²/(2n)` for one shard.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStats {
    pub sigma: DMatrix<f64>,
    pub w: DVector<f64>,
    pub yss: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Worker to coordinator.
    Up,
    /// Coordinator to worker.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Gradient,
    Theta,
    ActiveSet,
    LocalEstimate,
    Residual,
}

/// One metered message. Float slots and integer index slots are counted
/// separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommRecord {
    pub round: usize,
    pub direction: Direction,
    pub machine_id: usize,
    pub floats: usize,
    pub indices: usize,
    pub kind: PayloadKind,
}

impl CommRecord {
    pub fn slots(&self) -> usize {
        self.floats + self.indices
    }
}

/// Append-only message log.
///
/// Per-machine work may run concurrently, but records are appended by the
/// coordinator after the barrier, in machine order, so the ledger has a
/// deterministic total order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    records: Vec<CommRecord>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: CommRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[CommRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends all of `other`'s records after this ledger's.
    pub fn extend(&mut self, other: &CommLedger) {
        self.records.extend_from_slice(&other.records);
    }

    fn filtered(&self, direction: Option<Direction>, kind: Option<PayloadKind>) -> impl Iterator<Item = &CommRecord> {
        self.records
            .iter()
            .filter(move |r| direction.is_none_or(|d| r.direction == d) && kind.is_none_or(|k| r.kind == k))
    }

    /// Float slots, optionally restricted by direction and payload kind.
    pub fn floats(&self, direction: Option<Direction>, kind: Option<PayloadKind>) -> usize {
        self.filtered(direction, kind).map(|r| r.floats).sum()
    }

    /// Integer index slots, optionally restricted by direction and payload kind.
    pub fn indices(&self, direction: Option<Direction>, kind: Option<PayloadKind>) -> usize {
        self.filtered(direction, kind).map(|r| r.indices).sum()
    }

    pub fn total_floats(&self) -> usize {
        self.floats(None, None)
    }

    pub fn total_slots(&self) -> usize {
        self.records.iter().map(CommRecord::slots).sum()
    }
}

/// Splits `(x, y)` into `m` equal shards after a seeded row shuffle.
pub fn partition(x: &DMatrix<f64>, y: &DVector<f64>, m: usize, seed: u64) -> Result<Vec<Shard>> {
    let rows = x.nrows();
    if y.len() != rows {
        return Err(Error::DimensionMismatch { expected: rows, found: y.len() });
    }
    if m == 0 {
        return Err(Error::InvalidConfig("number of machines must be at least 1".into()));
    }
    if rows == 0 || !rows.is_multiple_of(m) {
        return Err(Error::IndivisibleN { rows, machines: m });
    }
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut seed::rng(seed));
    let n = rows / m;
    Ok(order
        .chunks(n)
        .enumerate()
        .map(|(k, idx)| Shard { x: x.select_rows(idx), y: y.select_rows(idx), machine_id: k })
        .collect())
}

pub fn local_stats(shard: &Shard) -> LocalStats {
    let n = shard.n();
    let scale = 1.0 / n as f64;
    let gram = shard.x.tr_mul(&shard.x);
    // gemm does not guarantee a bit-symmetric product.
    let sigma = (&gram + gram.transpose()) * (0.5 * scale);
    let w = shard.x.tr_mul(&shard.y) * scale;
    let yss = shard.y.norm_squared() * 0.5 * scale;
    LocalStats { sigma, w, yss, n }
}

/// `Σ_k θ − w_k`.
pub fn local_gradient(stats: &LocalStats, theta: &DVector<f64>) -> Result<DVector<f64>> {
    if theta.len() != stats.w.len() {
        return Err(Error::DimensionMismatch { expected: stats.w.len(), found: theta.len() });
    }
    Ok(&stats.sigma * theta - &stats.w)
}

fn solve_normal(
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    machine: usize,
    n: usize,
) -> Result<DVector<f64>> {
    let size = rhs.len();
    spd_solve(gram, &rhs).ok_or(Error::RankDeficient { machine, size, n })
}

fn scatter(active: &IndexSet, values: &DVector<f64>, p: usize) -> DVector<f64> {
    let mut out = DVector::zeros(p);
    for (r, &j) in active.iter().enumerate() {
        out[j] = values[r];
    }
    out
}

/// Least squares on the `active` columns of the shard, zero elsewhere.
pub fn local_restricted_ols(shard: &Shard, active: &IndexSet) -> Result<DVector<f64>> {
    let (n, p) = (shard.n(), shard.p());
    check_active(active, p)?;
    if active.len() > n {
        return Err(Error::RankDeficient { machine: shard.machine_id, size: active.len(), n });
    }
    let xa = shard.x.select_columns(active.as_slice());
    let coef = solve_normal(xa.tr_mul(&xa), xa.tr_mul(&shard.y), shard.machine_id, n)?;
    Ok(scatter(active, &coef, p))
}

fn check_active(active: &IndexSet, p: usize) -> Result<()> {
    if active.is_empty() {
        return Err(Error::InvalidIndexSet("active set must be non-empty".into()));
    }
    match active.as_slice().last() {
        Some(&last) if last >= p => Err(Error::IndexOutOfRange { index: last, p }),
        _ => Ok(()),
    }
}

impl LocalStats {
    /// Restricted least squares from the cached statistics:
    /// `θ_A = Σ_{A×A}⁻¹ w_A`.
    pub fn restricted_ols(&self, active: &IndexSet, machine: usize) -> Result<DVector<f64>> {
        let p = self.w.len();
        check_active(active, p)?;
        if active.len() > self.n {
            return Err(Error::RankDeficient { machine, size: active.len(), n: self.n });
        }
        let idx = active.as_slice();
        let k = idx.len();
        let gram = DMatrix::from_fn(k, k, |r, c| self.sigma[(idx[r], idx[c])]);
        let rhs = DVector::from_iterator(k, idx.iter().map(|&j| self.w[j]));
        let coef = solve_normal(gram, rhs, machine, self.n)?;
        Ok(scatter(active, &coef, p))
    }

    /// Unrestricted least squares on all `p` columns.
    pub fn ols(&self, machine: usize) -> Result<DVector<f64>> {
        let p = self.w.len();
        if self.n <= p {
            return Err(Error::RankDeficient { machine, size: p, n: self.n });
        }
        solve_normal(self.sigma.clone(), self.w.clone(), machine, self.n)
    }
}

/// Coordinate-wise mean of equally sized vectors.
pub fn average_estimates(estimates: &[DVector<f64>]) -> Result<DVector<f64>> {
    let first = estimates.first().ok_or(Error::EmptyInput)?;
    let mut sum = DVector::zeros(first.len());
    for e in estimates {
        if e.len() != first.len() {
            return Err(Error::DimensionMismatch { expected: first.len(), found: e.len() });
        }
        sum += e;
    }
    Ok(sum / estimates.len() as f64)
}

/// Shards plus cached per-machine statistics.
#[derive(Debug, Clone)]
pub struct Cluster {
    shards: Vec<Shard>,
    stats: Vec<LocalStats>,
    exec: Execution,
}

impl Cluster {
    /// Computes every machine's statistics, one task per machine.
    pub fn new(shards: Vec<Shard>, exec: Execution) -> Result<Self> {
        let first = shards.first().ok_or(Error::EmptyInput)?;
        let (n, p) = (first.n(), first.p());
        if n == 0 || p == 0 {
            return Err(Error::EmptyInput);
        }
        for s in &shards {
            if s.p() != p {
                return Err(Error::DimensionMismatch { expected: p, found: s.p() });
            }
            if s.n() != n {
                return Err(Error::DimensionMismatch { expected: n, found: s.n() });
            }
        }
        let stats = exec.map_slice(&shards, local_stats);
        Ok(Cluster { shards, stats, exec })
    }

    /// [`partition`] followed by [`Cluster::new`].
    pub fn from_data(x: &DMatrix<f64>, y: &DVector<f64>, m: usize, seed: u64, exec: Execution) -> Result<Self> {
        Self::new(partition(x, y, m, seed)?, exec)
    }

    pub fn machines(&self) -> usize {
        self.shards.len()
    }

    pub fn p(&self) -> usize {
        self.shards[0].p()
    }

    /// Rows per machine.
    pub fn n(&self) -> usize {
        self.shards[0].n()
    }

    pub fn n_total(&self) -> usize {
        self.n() * self.machines()
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn stats(&self) -> &[LocalStats] {
        &self.stats
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), found: theta.len() });
        }
        Ok(())
    }

    /// Records one message per worker machine.
    fn meter(&self, ledger: &mut CommLedger, round: usize, direction: Direction, kind: PayloadKind, floats: usize, indices: usize) {
        for machine_id in 1..self.machines() {
            ledger.push(CommRecord { round, direction, machine_id, floats, indices, kind });
        }
    }

    /// Sparse broadcast of `θ` as (index, value) pairs.
    fn broadcast_theta(&self, ledger: &mut CommLedger, round: usize, theta: &DVector<f64>) {
        let nnz = theta.iter().filter(|v| **v != 0.0).count();
        self.meter(ledger, round, Direction::Down, PayloadKind::Theta, nnz, nnz);
    }

    /// `(1/m) Σ_k ∇f_k(θ)`: `θ` is broadcast sparsely, every worker uploads
    /// a dense gradient.
    pub fn aggregate_gradient(&self, theta: &DVector<f64>, round: usize, ledger: &mut CommLedger) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        self.broadcast_theta(ledger, round, theta);
        let grads = self.exec.map_slice(&self.stats, |s| &s.sigma * theta - &s.w);
        self.meter(ledger, round, Direction::Up, PayloadKind::Gradient, self.p(), 0);
        average_estimates(&grads)
    }

    /// The gradient-enhanced surrogate anchored at `theta0`:
    /// `G = Σ₀`, `b = ∇f(θ₀) − Σ₀θ₀` with `Σ₀` the coordinator's Gram matrix.
    pub fn surrogate_objective(&self, theta0: &DVector<f64>, round: usize, ledger: &mut CommLedger) -> Result<QuadraticObjective> {
        let global_grad = self.aggregate_gradient(theta0, round, ledger)?;
        let sigma = &self.stats[0].sigma;
        let b = global_grad - sigma * theta0;
        QuadraticObjective::new(sigma.clone(), b)
    }

    /// Broadcasts `active`, solves restricted least squares on every machine
    /// and averages the uploaded coefficients.
    pub fn restricted_ols_average(&self, active: &IndexSet, round: usize, ledger: &mut CommLedger) -> Result<DVector<f64>> {
        check_active(active, self.p())?;
        self.meter(ledger, round, Direction::Down, PayloadKind::ActiveSet, 0, active.len());
        let estimates = self
            .exec
            .map_range(self.machines(), |k| self.stats[k].restricted_ols(active, k))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        self.meter(ledger, round, Direction::Up, PayloadKind::LocalEstimate, active.len(), 0);
        average_estimates(&estimates)
    }

    /// Average of per-machine unrestricted least-squares fits; every worker
    /// uploads `p` floats.
    pub fn oneshot_init(&self, ledger: &mut CommLedger) -> Result<DVector<f64>> {
        let estimates = self
            .exec
            .map_range(self.machines(), |k| self.stats[k].ols(k))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        self.meter(ledger, 0, Direction::Up, PayloadKind::LocalEstimate, self.p(), 0);
        average_estimates(&estimates)
    }

    /// `Σ_k ‖Y_k − X_k θ‖²`; `θ` is broadcast and each worker uploads one
    /// scalar.
    pub fn residual_sum_squares(&self, theta: &DVector<f64>, round: usize, ledger: &mut CommLedger) -> Result<f64> {
        self.check_theta(theta)?;
        self.broadcast_theta(ledger, round, theta);
        let support = IndexSet::support(theta);
        let theta_s = theta.select_rows(support.as_slice());
        let parts = self.exec.map_slice(&self.shards, |shard| {
            let fitted = shard.x.select_columns(support.as_slice()) * &theta_s;
            (&shard.y - fitted).norm_squared()
        });
        self.meter(ledger, round, Direction::Up, PayloadKind::Residual, 1, 0);
        Ok(parts.iter().sum())
    }
}
