//! Constrained batch Bayesian optimization for expensive simulators.
//!
//! The crate maximizes an objective `k(x)` subject to `v(x) <= threshold`
//! over a box-bounded design space. Both outputs are modeled by independent
//! Gaussian processes; new designs are proposed in batches of `q` by
//! maximizing a Monte Carlo estimate of the batch constrained expected
//! improvement. Evaluation is pluggable: built-in analytic problems run in
//! process, while external simulators exchange CSV files with a persisted
//! campaign (ask/tell).

pub mod acquisition;
pub mod campaign;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluators;
pub mod gp;
pub mod optimize;
pub mod par;
pub mod qmc;
pub mod report;
pub mod seeds;
pub mod space;

pub use error::{Error, Result};
