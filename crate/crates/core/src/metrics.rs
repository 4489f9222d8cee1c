//! Support-recovery and estimation-error metrics.
//!
//! Rates with a zero denominator are reported as 0.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::quadratic::IndexSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: f64,
    pub tnr: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimationErrors {
    /// `‖θ̂ − θ*‖₂`.
    pub see: f64,
    /// `‖θ̂ − θ*‖₂²`.
    pub see_squared: f64,
    /// `‖θ̂ − θ*‖₂ / ‖θ*‖₂`.
    pub reee: f64,
}

fn check_range(set: &IndexSet, p: usize) -> Result<()> {
    match set.as_slice().last() {
        Some(&j) if j >= p => Err(Error::IndexOutOfRange { index: j, p }),
        _ => Ok(()),
    }
}

pub fn confusion(estimated: &IndexSet, truth: &IndexSet, p: usize) -> Result<Confusion> {
    check_range(estimated, p)?;
    check_range(truth, p)?;
    let tp = estimated.intersection_len(truth);
    let fp = estimated.len() - tp;
    let fn_ = truth.len() - tp;
    let tn = p - tp - fp - fn_;
    Ok(Confusion { tp, tn, fp, fn_ })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn rates(c: &Confusion) -> Rates {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    Rates { tpr: ratio(tp, tp + fn_), tnr: ratio(tn, fp + tn), mcc: ratio(tp * tn - fp * fn_, den) }
}

pub fn estimation_errors(theta_hat: &DVector<f64>, theta_star: &DVector<f64>) -> Result<EstimationErrors> {
    if theta_hat.len() != theta_star.len() {
        return Err(Error::DimensionMismatch { expected: theta_star.len(), found: theta_hat.len() });
    }
    let truth_norm = theta_star.norm();
    if truth_norm == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let see_squared = (theta_hat - theta_star).norm_squared();
    let see = see_squared.sqrt();
    Ok(EstimationErrors { see, see_squared, reee: see / truth_norm })
}

/// Everything reported for one fitted model against a known truth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub confusion: Confusion,
    pub rates: Rates,
    pub errors: EstimationErrors,
}

pub fn evaluate(theta_hat: &DVector<f64>, active: &IndexSet, theta_star: &DVector<f64>) -> Result<RecoveryReport> {
    let p = theta_star.len();
    let confusion = confusion(active, &IndexSet::support(theta_star), p)?;
    Ok(RecoveryReport { confusion, rates: rates(&confusion), errors: estimation_errors(theta_hat, theta_star)? })
}
