//! Exact Gaussian-process regression on the unit cube.
//!
//! Outputs are standardized per channel before modeling: the objective is
//! centered and scaled to unit variance, the constraint is only scaled. The
//! model then uses a zero prior mean, a Matérn-5/2 ARD kernel and a fixed
//! homoscedastic noise of [`NOISE_STD`] in standardized units. Kernel
//! hyperparameters are fitted by multi-start maximization of the log marginal
//! likelihood (see [`fit`]).

mod fit;
mod kernel;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{fit, fit_with, log_marginal_likelihood, FitOptions, KernelShape, LmlEvaluation};
pub use kernel::matern_kernel;
pub use model::{joint_posterior_samples, GpModel};

/// Observation noise standard deviation, in standardized output units.
pub const NOISE_STD: f64 = 0.005;

/// Matérn smoothness parameter.
pub const MATERN_NU: f64 = 2.5;

pub(crate) const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub(crate) const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-4, 1e4);

/// Which black-box output a model represents; decides the standardization rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Centered at the sample mean, scaled to unit sample variance.
    Objective,
    /// Scaled to unit sample variance, not centered.
    Constraint,
}

/// Affine map between raw and standardized outputs: `raw = center + scale * std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: f64,
    pub scale: f64,
}

impl Standardization {
    pub fn identity() -> Self {
        Self {
            center: 0.0,
            scale: 1.0,
        }
    }

    /// Standardization constants for `raw` under the channel's rule. A zero
    /// sample deviation (constant data, or a single point) falls back to scale 1.
    pub fn for_channel(channel: Channel, raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::invalid("cannot standardize an empty target vector"));
        }
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                row: i,
                message: format!("non-finite target {}", raw[i]),
            });
        }
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let sd = if raw.len() > 1 {
            (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        let center = match channel {
            Channel::Objective => mean,
            Channel::Constraint => 0.0,
        };
        Ok(Self { center, scale })
    }

    #[inline]
    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.center) / self.scale
    }

    #[inline]
    pub fn invert(&self, standardized: f64) -> f64 {
        self.center + self.scale * standardized
    }
}

/// Kernel hyperparameters. The noise level is carried along for the record
/// and is never changed by fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparameters {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_std: f64,
}

impl GpHyperparameters {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        let h = Self {
            lengthscales,
            signal_variance,
            noise_std: NOISE_STD,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if self.lengthscales.is_empty() {
            return Err(Error::invalid("at least one lengthscale is required"));
        }
        if !self.lengthscales.iter().all(|&l| ok(l)) {
            return Err(Error::invalid(format!(
                "lengthscales must be positive and finite: {:?}",
                self.lengthscales
            )));
        }
        if !ok(self.signal_variance) || !ok(self.noise_std) {
            return Err(Error::invalid(format!(
                "signal variance {} and noise std {} must be positive",
                self.signal_variance, self.noise_std
            )));
        }
        Ok(())
    }
}

/// A univariate Gaussian marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGaussian {
    pub mean: f64,
    pub std: f64,
}

impl PosteriorGaussian {
    pub fn new(mean: f64, std: f64) -> Self {
        Self {
            mean,
            std: std.max(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_rule_centers_and_scales() {
        let raw = [1.0, 2.0, 3.0, 4.0];
        let s = Standardization::for_channel(Channel::Objective, &raw).unwrap();
        assert_eq!(s.center, 2.5);
        assert!((s.scale - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let z: Vec<f64> = raw.iter().map(|&v| s.apply(v)).collect();
        assert!(z.iter().sum::<f64>().abs() < 1e-12);
        for (r, zz) in raw.iter().zip(&z) {
            assert!((s.invert(*zz) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn constraint_rule_only_scales() {
        let s = Standardization::for_channel(Channel::Constraint, &[20.0, 22.0, 24.0]).unwrap();
        assert_eq!(s.center, 0.0);
        assert_eq!(s.scale, 2.0);
    }

    #[test]
    fn constant_data_scale_one() {
        let s = Standardization::for_channel(Channel::Objective, &[7.0; 5]).unwrap();
        assert_eq!(s, Standardization { center: 7.0, scale: 1.0 });
        assert!(Standardization::for_channel(Channel::Objective, &[]).is_err());
        assert!(Standardization::for_channel(Channel::Objective, &[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(GpHyperparameters::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(GpHyperparameters::new(vec![], 1.0).is_err());
        assert!(GpHyperparameters::new(vec![1.0], -1.0).is_err());
        assert_eq!(GpHyperparameters::new(vec![1.0], 1.0).unwrap().noise_std, NOISE_STD);
    }
}
