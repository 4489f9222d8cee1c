//! Seeded synthetic regression data: Gaussian designs, sparse ±1
//! coefficients, and noise calibrated to a population signal-to-noise ratio
//! of one.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seed::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// `Σ = diag(spike…, 1, …, 1)`.
    Uncorrelated,
    /// `σ_ij = ρ^|i−j|`.
    Correlated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub p: usize,
    pub structure: Structure,
    pub rho: f64,
    pub spike: Vec<f64>,
}

impl DesignSpec {
    pub const DEFAULT_RHO: f64 = 0.8;
    pub const DEFAULT_SPIKE: [f64; 3] = [10.0, 5.0, 2.0];

    pub fn uncorrelated(p: usize) -> Self {
        DesignSpec { p, structure: Structure::Uncorrelated, rho: Self::DEFAULT_RHO, spike: Self::DEFAULT_SPIKE.to_vec() }
    }

    pub fn correlated(p: usize) -> Self {
        DesignSpec { p, structure: Structure::Correlated, rho: Self::DEFAULT_RHO, spike: Self::DEFAULT_SPIKE.to_vec() }
    }

    pub fn validate(&self) -> Result<()> {
        match self.structure {
            Structure::Uncorrelated => {
                if self.p < self.spike.len() + 1 {
                    return Err(Error::InvalidConfig(format!(
                        "uncorrelated design needs p >= {}, got {}",
                        self.spike.len() + 1,
                        self.p
                    )));
                }
                if self.spike.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::InvalidConfig("spike variances must be positive".into()));
                }
            }
            Structure::Correlated => {
                if self.p == 0 {
                    return Err(Error::InvalidConfig("p must be positive".into()));
                }
                if !(0.0..1.0).contains(&self.rho) {
                    return Err(Error::InvalidConfig(format!("rho must lie in [0, 1), got {}", self.rho)));
                }
            }
        }
        Ok(())
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self.structure {
            Structure::Uncorrelated => DMatrix::from_fn(self.p, self.p, |i, j| {
                if i != j {
                    0.0
                } else {
                    self.spike.get(i).copied().unwrap_or(1.0)
                }
            }),
            Structure::Correlated => {
                DMatrix::from_fn(self.p, self.p, |i, j| self.rho.powi(i.abs_diff(j) as i32))
            }
        }
    }
}

/// Rows drawn i.i.d. from `N(0, Σ)` as `Z Lᵀ` with `Σ = L Lᵀ`.
pub fn gen_design(spec: &DesignSpec, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("N must be at least 1".into()));
    }
    let chol = spec.covariance().cholesky().ok_or(Error::FactorizationFailure)?;
    let mut rng = seed::rng(seed);
    // Filled row by row so a prefix of rows does not depend on N.
    let z = DMatrix::from_row_iterator(n, spec.p, (0..n * spec.p).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok(z * chol.l().transpose())
}

/// `s_star` distinct seeded positions holding +1, −1, +1, … in index order.
pub fn gen_truth(s_star: usize, p: usize, seed: u64) -> Result<DVector<f64>> {
    if s_star == 0 || s_star > p {
        return Err(Error::InvalidConfig(format!("s* = {s_star} must lie in [1, p = {p}]")));
    }
    let mut positions = rand::seq::index::sample(&mut seed::rng(seed), p, s_star).into_vec();
    positions.sort_unstable();
    let mut truth = DVector::zeros(p);
    for (k, j) in positions.into_iter().enumerate() {
        truth[j] = if k % 2 == 0 { 1.0 } else { -1.0 };
    }
    Ok(truth)
}

/// `y = Xθ* + ε` with `ε ~ N(0, σ²)` and `σ² = θ*ᵀΣθ*`.
pub fn gen_response(
    x: &DMatrix<f64>,
    theta_star: &DVector<f64>,
    sigma_cov: &DMatrix<f64>,
    seed: u64,
) -> Result<(DVector<f64>, f64)> {
    let p = theta_star.len();
    if x.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, found: x.ncols() });
    }
    if sigma_cov.nrows() != p || sigma_cov.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, found: sigma_cov.nrows() });
    }
    let signal = theta_star.dot(&(sigma_cov * theta_star));
    if !(signal > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let noise_sd = signal.sqrt();
    let mut rng = seed::rng(seed);
    let eps = DVector::from_iterator(x.nrows(), (0..x.nrows()).map(|_| noise_sd * rng.sample::<f64, _>(StandardNormal)));
    Ok((x * theta_star + eps, noise_sd))
}

/// A full synthetic dataset with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub design: DesignSpec,
    pub seed: u64,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub theta_star: DVector<f64>,
    pub noise_sd: f64,
}

impl SyntheticDataset {
    /// Design, truth and noise come from separate streams derived from `seed`.
    pub fn generate(design: &DesignSpec, n: usize, s_star: usize, seed: u64) -> Result<Self> {
        let x = gen_design(design, n, seed::stream_seed(seed, Stream::Design))?;
        let theta_star = gen_truth(s_star, design.p, seed::stream_seed(seed, Stream::Truth))?;
        let (y, noise_sd) = gen_response(&x, &theta_star, &design.covariance(), seed::stream_seed(seed, Stream::Noise))?;
        Ok(SyntheticDataset { design: design.clone(), seed, x, y, theta_star, noise_sd })
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.theta_star.len()).filter(|&j| self.theta_star[j] != 0.0).collect()
    }
}
