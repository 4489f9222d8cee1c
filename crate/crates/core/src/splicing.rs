//! Splicing solver for `min ½θᵀGθ + bᵀθ` subject to `‖θ‖₀ = s`.
//!
//! Each splice ranks active coordinates by their backward sacrifice
//! `ξ_j = G_jj θ_j²` and inactive coordinates by their forward sacrifice
//! `ζ_j = d_j² / G_jj` (with dual `d = −(Gθ + b)`), swaps the `C` weakest
//! active coordinates for the `C` strongest inactive ones, re-solves on the
//! new support, and keeps the first `C = 1, …, c_max` whose loss drops by
//! more than `tau`.

use itertools::Itertools;
use nalgebra::DVector;

use crate::quadratic::{IndexSet, QuadraticObjective};
use crate::{Error, Result};

/// Largest number of supports [`exhaustive_min`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplicingConfig {
    pub s: usize,
    pub c_max: usize,
    pub tau: f64,
    pub max_splices: usize,
}

impl SplicingConfig {
    pub const DEFAULT_C_MAX: usize = 2;
    pub const DEFAULT_MAX_SPLICES: usize = 100;

    pub fn new(s: usize, c_max: usize, tau: f64, max_splices: usize) -> Result<Self> {
        let cfg = SplicingConfig { s, c_max, tau, max_splices };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `c_max = min(2, s)`, `max_splices = 100` and `tau` from [`default_tau`].
    pub fn with_defaults(s: usize, p: usize, n_total: usize) -> Result<Self> {
        Self::new(s, Self::DEFAULT_C_MAX.min(s), default_tau(s, p, n_total), Self::DEFAULT_MAX_SPLICES)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::InvalidConfig("support size s must be at least 1".into()));
        }
        if self.c_max == 0 || self.c_max > self.s {
            return Err(Error::InvalidConfig(format!(
                "c_max must lie in [1, s = {}], got {}",
                self.s, self.c_max
            )));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!("tau must be finite and non-negative, got {}", self.tau)));
        }
        if self.max_splices == 0 {
            return Err(Error::InvalidConfig("max_splices must be at least 1".into()));
        }
        Ok(())
    }
}

/// `0.01 · s · ln p · ln ln N / N`, or 0 when `N < 3` or `p < 2`.
pub fn default_tau(s: usize, p: usize, n_total: usize) -> f64 {
    if n_total < 3 || p < 2 {
        return 0.0;
    }
    let n = n_total as f64;
    0.01 * s as f64 * (p as f64).ln() * n.ln().ln() / n
}

/// One splicing iterate: the support, its restricted minimizer and dual.
#[derive(Debug, Clone, PartialEq)]
pub struct SplicingState {
    pub active: IndexSet,
    pub inactive: IndexSet,
    pub theta: DVector<f64>,
    /// `d = −(Gθ + b)`.
    pub dual: DVector<f64>,
    pub loss: f64,
}

impl SplicingState {
    /// Solves the restricted problem on `active` and fills in the dual.
    pub fn solve(obj: &QuadraticObjective, active: IndexSet) -> Result<Self> {
        let p = obj.dim();
        let theta = obj.restricted_minimize(&active)?;
        let dual = -obj.gradient_sparse(&theta, &active);
        let loss = obj.eval_sparse(&theta, &active);
        let inactive = active.complement(p);
        Ok(SplicingState { active, inactive, theta, dual, loss })
    }

    pub fn s(&self) -> usize {
        self.active.len()
    }
}

/// Result of [`quad_splice`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplicingSolution {
    pub state: SplicingState,
    /// Loss of the restricted solve on the initial support.
    pub initial_loss: f64,
    /// Number of accepted splices.
    pub splices: usize,
    /// Set when `max_splices` accepted splices happened without reaching a
    /// fixed point.
    pub cap_reached: bool,
}

fn positive_diagonal(obj: &QuadraticObjective, j: usize) -> Result<f64> {
    let gjj = obj.hessian()[(j, j)];
    if gjj > 0.0 {
        Ok(gjj)
    } else {
        Err(Error::NonPositiveDiagonal { index: j, value: gjj })
    }
}

/// Backward sacrifices `ξ` (aligned with `state.active`) and forward
/// sacrifices `ζ` (aligned with `state.inactive`).
pub fn sacrifices(obj: &QuadraticObjective, state: &SplicingState) -> Result<(Vec<f64>, Vec<f64>)> {
    let xi = state
        .active
        .iter()
        .map(|&j| Ok(positive_diagonal(obj, j)? * state.theta[j] * state.theta[j]))
        .collect::<Result<Vec<_>>>()?;
    let zeta = state
        .inactive
        .iter()
        .map(|&j| Ok(state.dual[j] * state.dual[j] / positive_diagonal(obj, j)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((xi, zeta))
}

/// The `c` smallest-`ξ` members of `active` and the `c` largest-`ζ` members
/// of `inactive`; ties go to the lower index.
pub fn splice_sets(
    active: &IndexSet,
    xi: &[f64],
    inactive: &IndexSet,
    zeta: &[f64],
    c: usize,
) -> Result<(IndexSet, IndexSet)> {
    if xi.len() != active.len() {
        return Err(Error::DimensionMismatch { expected: active.len(), found: xi.len() });
    }
    if zeta.len() != inactive.len() {
        return Err(Error::DimensionMismatch { expected: inactive.len(), found: zeta.len() });
    }
    if c > active.len() {
        return Err(Error::ExchangeTooLarge { requested: c, available: active.len() });
    }
    if c > inactive.len() {
        return Err(Error::ExchangeTooLarge { requested: c, available: inactive.len() });
    }
    let leave = active
        .iter()
        .zip(xi)
        .sorted_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
        .take(c)
        .map(|(&j, _)| j)
        .collect();
    let enter = inactive
        .iter()
        .zip(zeta)
        .sorted_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)))
        .take(c)
        .map(|(&j, _)| j)
        .collect();
    Ok((sorted_set(leave), sorted_set(enter)))
}

fn sorted_set(mut v: Vec<usize>) -> IndexSet {
    v.sort_unstable();
    IndexSet(v)
}

/// One splicing step. Returns the new state, whether a splice was accepted,
/// and the exchange size used (0 when nothing was accepted).
pub fn splice_once(
    obj: &QuadraticObjective,
    state: &SplicingState,
    config: &SplicingConfig,
) -> Result<(SplicingState, bool, usize)> {
    let (xi, zeta) = sacrifices(obj, state)?;
    let c_limit = config.c_max.min(state.active.len()).min(state.inactive.len());
    for c in 1..=c_limit {
        let (leave, enter) = splice_sets(&state.active, &xi, &state.inactive, &zeta, c)?;
        let candidate = SplicingState::solve(obj, state.active.exchange(&leave, &enter))?;
        if state.loss - candidate.loss > config.tau {
            return Ok((candidate, true, c));
        }
    }
    Ok((state.clone(), false, 0))
}

/// Runs [`splice_once`] from `init_active` until no exchange improves the
/// loss by more than `tau`, or `max_splices` splices have been accepted.
pub fn quad_splice(
    obj: &QuadraticObjective,
    init_active: &IndexSet,
    config: &SplicingConfig,
) -> Result<SplicingSolution> {
    config.validate()?;
    if init_active.len() != config.s {
        return Err(Error::DimensionMismatch { expected: config.s, found: init_active.len() });
    }
    let mut state = SplicingState::solve(obj, init_active.clone())?;
    let initial_loss = state.loss;
    let mut splices = 0;
    loop {
        if splices == config.max_splices {
            // One more probe distinguishes "converged exactly at the cap"
            // from "still improving".
            let (_, improving, _) = splice_once(obj, &state, config)?;
            return Ok(SplicingSolution { state, initial_loss, splices, cap_reached: improving });
        }
        let (next, accepted, _) = splice_once(obj, &state, config)?;
        if !accepted {
            return Ok(SplicingSolution { state, initial_loss, splices, cap_reached: false });
        }
        state = next;
        splices += 1;
    }
}

/// An interval of the augmented-Lagrangian penalty `ρ`. Infinite endpoints
/// are represented by `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoInterval {
    pub lower: f64,
    pub upper: f64,
    pub lower_open: bool,
    pub upper_open: bool,
}

impl RhoInterval {
    pub fn contains(&self, rho: f64) -> bool {
        let above = if self.lower_open { rho > self.lower } else { rho >= self.lower };
        let below = if self.upper_open { rho < self.upper } else { rho <= self.upper };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper || (self.lower == self.upper && (self.lower_open || self.upper_open))
    }
}

/// `r(c) = (c-th largest |d_j| over inactive) / (c-th smallest |θ_i| over
/// active)`; zero when fewer than `c` inactive coordinates exist.
fn exchange_ratio(abs_dual_desc: &[f64], abs_theta_asc: &[f64], c: usize) -> f64 {
    match abs_dual_desc.get(c - 1) {
        None => 0.0,
        Some(&d) => {
            let t = abs_theta_asc[c - 1];
            if t == 0.0 {
                f64::INFINITY
            } else {
                d / t
            }
        }
    }
}

/// The range of `ρ` for which the rank rule on `|θ + d/ρ|` exchanges exactly
/// `c` coordinates between the active and inactive sets of `state`.
pub fn rho_interval(state: &SplicingState, c: usize) -> Result<RhoInterval> {
    let s = state.s();
    if c > s {
        return Err(Error::ExchangeTooLarge { requested: c, available: s });
    }
    let abs_theta: Vec<f64> = state.active.iter().map(|&j| state.theta[j].abs()).sorted_by(f64::total_cmp).collect();
    let abs_dual: Vec<f64> = state
        .inactive
        .iter()
        .map(|&j| state.dual[j].abs())
        .sorted_by(|a, b| b.total_cmp(a))
        .collect();
    let r = |k: usize| exchange_ratio(&abs_dual, &abs_theta, k);
    Ok(if c == 0 {
        RhoInterval { lower: r(1), upper: f64::INFINITY, lower_open: true, upper_open: true }
    } else if c < s {
        RhoInterval { lower: r(c + 1), upper: r(c), lower_open: true, upper_open: false }
    } else {
        RhoInterval { lower: 0.0, upper: r(s), lower_open: true, upper_open: false }
    })
}

/// Number of `k`-subsets of `n` items, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Best size-`s` support by exhaustive enumeration; ties go to the
/// lexicographically first support.
pub fn exhaustive_min(obj: &QuadraticObjective, s: usize) -> Result<(IndexSet, f64)> {
    let p = obj.dim();
    if s == 0 || s > p {
        return Err(Error::InvalidConfig(format!("support size {s} outside [1, {p}]")));
    }
    let count = binomial(p, s);
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooManySubsets { count, limit: ENUMERATION_LIMIT });
    }
    let mut best: Option<(IndexSet, f64)> = None;
    for combo in (0..p).combinations(s) {
        let active = IndexSet(combo);
        let theta = obj.restricted_minimize(&active)?;
        let loss = obj.eval_sparse(&theta, &active);
        if best.as_ref().is_none_or(|(_, b)| loss < *b) {
            best = Some((active, loss));
        }
    }
    Ok(best.expect("at least one support"))
}
