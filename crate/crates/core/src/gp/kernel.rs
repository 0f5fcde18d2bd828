//! Matérn ν = 5/2 covariance with per-dimension (ARD) lengthscales.

use crate::error::{Error, Result};
use crate::gp::GpHyperparameters;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Scaled distance `r = sqrt(Σ ((a_i - b_i) / ℓ_i)^2)`.
#[inline]
pub(crate) fn scaled_distance(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let t = (x - y) / l;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

/// Kernel value as a function of the scaled distance.
#[inline]
pub(crate) fn matern52_of_r(r: f64, signal_variance: f64) -> f64 {
    let s5r = SQRT5 * r;
    signal_variance * (1.0 + s5r + 5.0 * r * r / 3.0) * (-s5r).exp()
}

/// `-(1/r) dk/dr`: the factor that multiplies `(Δ_i/ℓ_i)^2` in the derivative
/// with respect to `log ℓ_i`. Finite at `r = 0`.
#[inline]
pub(crate) fn matern52_lengthscale_factor(r: f64, signal_variance: f64) -> f64 {
    let s5r = SQRT5 * r;
    signal_variance * 5.0 / 3.0 * (1.0 + s5r) * (-s5r).exp()
}

#[inline]
pub(crate) fn matern52_raw(a: &[f64], b: &[f64], lengthscales: &[f64], signal_variance: f64) -> f64 {
    matern52_of_r(scaled_distance(a, b, lengthscales), signal_variance)
}

/// Matérn-5/2 covariance between two unit-cube points.
pub fn matern_kernel(a: &[f64], b: &[f64], hyper: &GpHyperparameters) -> Result<f64> {
    let d = hyper.lengthscales.len();
    if a.len() != d || b.len() != d {
        return Err(Error::invalid(format!(
            "kernel inputs of length {} and {} do not match {d} lengthscales",
            a.len(),
            b.len()
        )));
    }
    Ok(matern52_raw(a, b, &hyper.lengthscales, hyper.signal_variance))
}
