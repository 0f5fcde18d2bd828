//! Black-box backends: built-in analytic problems evaluated in process, and
//! the CSV ask/tell protocol for external simulators.

mod builtin;
pub mod protocol;

pub use builtin::{benchmark_quadratic, proxy_prechamber, BuiltinEvaluator};

use crate::error::Result;
use crate::space::ParameterSpace;

/// An in-process black box returning `(k, v)` for a physical design `x`.
pub trait Evaluator: Sync {
    fn name(&self) -> &str;

    /// Design space the evaluator is defined on.
    fn space(&self) -> ParameterSpace;

    /// Constraint threshold the problem is posed with.
    fn threshold(&self) -> f64;

    fn evaluate(&self, x: &[f64]) -> Result<(f64, f64)>;
}
