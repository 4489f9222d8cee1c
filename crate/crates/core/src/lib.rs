//! Distributed best subset selection for sparse linear regression.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadratic`]: dense quadratic objectives `½θᵀGθ + bᵀθ` and their
//!   restricted minimisers.
//! * [`splicing`]: the ℓ0-constrained splicing solver for quadratic losses.
//! * [`cluster`]: a simulated cluster of machines holding data shards, with a
//!   communication ledger and the gradient-enhanced surrogate objective.
//! * [`dbess`]: the two-stage fixed-support procedure, the information
//!   criterion and the sparsity sweep.
//! * [`datagen`], [`metrics`], [`experiment`]: synthetic studies.
//!
//! Data-parallel loops (per-machine statistics, per-sparsity fits, Monte
//! Carlo replicates) run on rayon when the `parallel` feature is enabled and
//! [`Execution::Parallel`] is selected; otherwise they run sequentially.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod datagen;
pub mod dbess;
mod error;
pub mod exec;
pub mod experiment;
pub mod metrics;
pub mod quadratic;
pub mod seed;
pub mod splicing;

pub use error::{Error, Result};
pub use exec::Execution;
pub use quadratic::{IndexSet, QuadraticObjective};
