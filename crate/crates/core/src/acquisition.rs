//! Acquisition functions.
//!
//! Closed forms for expected improvement (EI), probability of feasibility (PF)
//! and their product, plus a Monte Carlo estimator of the batch constrained
//! improvement
//!
//! ```text
//! qCEI(x_1..x_q) = E[ max_i 1(v_i <= threshold) · max(0, k_i − best) ]
//! ```
//!
//! where `(k_1..k_q)` and `(v_1..v_q)` are joint posterior draws from two
//! independent GPs. The normal base draws are fixed per estimator so that the
//! estimate is a deterministic, continuous-ish function of the batch.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{GpModel, PosteriorGaussian};
use crate::qmc::{normal_points, SamplerKind};
use crate::space::UnitPoint;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    /// Constrained expected improvement (Monte Carlo batch form).
    #[default]
    Cei,
    /// Upper confidence bound, summed over the batch.
    Ucb,
}

/// How a batch of `q` candidates is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// Optimize all `q·d` coordinates at once.
    #[default]
    Joint,
    /// Greedy: pick one point at a time, holding earlier picks fixed.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    /// Feasibility bound on the raw constraint output (`v <= threshold`).
    pub threshold: f64,
    pub mc_samples: usize,
    /// Batch size `q`.
    pub q: usize,
    pub ucb_beta: f64,
    pub batch_mode: BatchMode,
    pub sampler: SamplerKind,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            kind: AcquisitionKind::Cei,
            threshold: 25.0,
            mc_samples: 1024,
            q: 5,
            ucb_beta: 2.0,
            batch_mode: BatchMode::Joint,
            sampler: SamplerKind::Sobol,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be at least 1"));
        }
        if self.q == 0 {
            return Err(Error::invalid("batch size q must be at least 1"));
        }
        if !self.threshold.is_finite() {
            return Err(Error::invalid("constraint threshold must be finite"));
        }
        if !(self.ucb_beta >= 0.0 && self.ucb_beta.is_finite()) {
            return Err(Error::invalid("ucb_beta must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Best feasible observation in the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub index: usize,
    pub value: f64,
}

#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn expected_improvement(g: PosteriorGaussian, best: f64) -> f64 {
    let diff = g.mean - best;
    if g.std <= 0.0 {
        return diff.max(0.0);
    }
    let z = diff / g.std;
    (diff * normal_cdf(z) + g.std * normal_pdf(z)).max(0.0)
}

/// `P(v <= threshold)` under the (raw-unit) constraint posterior.
pub fn probability_feasible(g: PosteriorGaussian, threshold: f64) -> f64 {
    if g.std <= 0.0 {
        return if g.mean <= threshold { 1.0 } else { 0.0 };
    }
    normal_cdf((threshold - g.mean) / g.std).clamp(0.0, 1.0)
}

pub fn constrained_ei(gk: PosteriorGaussian, gv: PosteriorGaussian, best: f64, threshold: f64) -> f64 {
    probability_feasible(gv, threshold) * expected_improvement(gk, best)
}

pub fn ucb(g: PosteriorGaussian, beta: f64) -> f64 {
    g.mean + beta * g.std
}

/// Feasible observation with the largest objective; ties go to the earliest
/// row. `None` when nothing is feasible.
pub fn incumbent(dataset: &Dataset, threshold: f64) -> Result<Option<Incumbent>> {
    if dataset.is_empty() {
        return Err(Error::InvalidState("incumbent of an empty dataset".into()));
    }
    let mut best: Option<Incumbent> = None;
    for (i, o) in dataset.observations().enumerate() {
        if o.is_feasible(threshold) && best.is_none_or(|b| o.k > b.value) {
            best = Some(Incumbent { index: i, value: o.k });
        }
    }
    Ok(best)
}

/// What the batch estimator averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchTarget {
    /// `max_i 1(v_i <= t) · max(0, k_i − best)`. `best` is given in raw
    /// objective units; the improvement is measured in standardized units.
    ConstrainedImprovement { best: f64 },
    /// `max_i 1(v_i <= t)`: probability that some batch member is feasible.
    Feasibility,
    /// `Σ_i (μ_i + β σ_i)` in standardized objective units; no sampling.
    UpperConfidence { beta: f64 },
}

/// Monte Carlo estimate and its nominal standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Batch acquisition over `q` points with fixed base samples.
#[derive(Debug, Clone)]
pub struct BatchAcquisition<'a> {
    model_k: &'a GpModel,
    model_v: &'a GpModel,
    target: BatchTarget,
    threshold: f64,
    q: usize,
    n_samples: usize,
    /// `n_samples × 2q` standard normals: objective block, then constraint block.
    base: Vec<f64>,
}

impl<'a> BatchAcquisition<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model_k: &'a GpModel,
        model_v: &'a GpModel,
        target: BatchTarget,
        threshold: f64,
        q: usize,
        n_samples: usize,
        sampler: SamplerKind,
        seed: u64,
    ) -> Result<Self> {
        if q == 0 || n_samples == 0 {
            return Err(Error::invalid("batch acquisition needs q >= 1 and n_samples >= 1"));
        }
        if model_k.dim() != model_v.dim() {
            return Err(Error::invalid("objective and constraint models differ in dimension"));
        }
        let base = match target {
            BatchTarget::UpperConfidence { .. } => Vec::new(),
            _ => normal_points(sampler, n_samples, 2 * q, seed)?,
        };
        Ok(Self {
            model_k,
            model_v,
            target,
            threshold,
            q,
            n_samples,
            base,
        })
    }

    /// Builds the estimator a config asks for, falling back to feasibility
    /// search when there is no incumbent.
    pub fn from_config(
        model_k: &'a GpModel,
        model_v: &'a GpModel,
        config: &AcquisitionConfig,
        best: Option<f64>,
        q: usize,
        seed: u64,
    ) -> Result<Self> {
        let target = match (config.kind, best) {
            (AcquisitionKind::Ucb, _) => BatchTarget::UpperConfidence {
                beta: config.ucb_beta,
            },
            (AcquisitionKind::Cei, Some(best)) => BatchTarget::ConstrainedImprovement { best },
            (AcquisitionKind::Cei, None) => BatchTarget::Feasibility,
        };
        Self::new(
            model_k,
            model_v,
            target,
            config.threshold,
            q,
            config.mc_samples,
            config.sampler,
            seed,
        )
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.model_k.dim()
    }

    pub fn target(&self) -> BatchTarget {
        self.target
    }

    /// Value at a flat `q·d` coordinate vector. Numeric failures score −∞.
    pub fn evaluate_flat(&self, flat: &[f64]) -> f64 {
        let d = self.dim();
        let xs: Vec<&[f64]> = flat.chunks(d).collect();
        self.estimate(&xs).map(|e| e.value).unwrap_or(f64::NEG_INFINITY)
    }

    pub fn estimate(&self, xs: &[&[f64]]) -> Result<McEstimate> {
        if xs.len() != self.q {
            return Err(Error::invalid(format!(
                "batch has {} points, estimator built for q = {}",
                xs.len(),
                self.q
            )));
        }
        if let BatchTarget::UpperConfidence { beta } = self.target {
            let value = xs.iter().map(|x| ucb(self.model_k.posterior(x), beta)).sum();
            return Ok(McEstimate {
                value,
                std_error: 0.0,
            });
        }
        let jk = self.model_k.joint_factor(xs)?;
        let jv = self.model_v.joint_factor(xs)?;
        let best_std = match self.target {
            BatchTarget::ConstrainedImprovement { best } => self.model_k.standardization().apply(best),
            _ => 0.0,
        };
        let sv = self.model_v.standardization();
        let q = self.q;
        let mut kbuf = vec![0.0; q];
        let mut vbuf = vec![0.0; q];
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for s in 0..self.n_samples {
            let row = &self.base[s * 2 * q..(s + 1) * 2 * q];
            jk.transform(&row[..q], &mut kbuf);
            jv.transform(&row[q..], &mut vbuf);
            let mut best_here = 0.0f64;
            for i in 0..q {
                if sv.invert(vbuf[i]) <= self.threshold {
                    let gain = match self.target {
                        BatchTarget::ConstrainedImprovement { .. } => kbuf[i] - best_std,
                        _ => 1.0,
                    };
                    best_here = best_here.max(gain);
                }
            }
            sum += best_here;
            sum_sq += best_here * best_here;
        }
        let n = self.n_samples as f64;
        let mean = sum / n;
        let var = if self.n_samples > 1 {
            ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(McEstimate {
            value: mean,
            std_error: (var / n).sqrt(),
        })
    }
}

/// Monte Carlo batch constrained EI at `xs` with scrambled-Sobol base
/// samples. `best` is in raw units; the value is in standardized objective
/// units, comparable to [`constrained_ei`] of the standardized posterior.
pub fn qcei_mc(
    model_k: &GpModel,
    model_v: &GpModel,
    xs: &[UnitPoint],
    best: f64,
    threshold: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    qcei_mc_estimate(model_k, model_v, xs, best, threshold, n_samples, seed, SamplerKind::Sobol)
        .map(|e| e.value)
}

#[allow(clippy::too_many_arguments)]
pub fn qcei_mc_estimate(
    model_k: &GpModel,
    model_v: &GpModel,
    xs: &[UnitPoint],
    best: f64,
    threshold: f64,
    n_samples: usize,
    seed: u64,
    sampler: SamplerKind,
) -> Result<McEstimate> {
    let acq = BatchAcquisition::new(
        model_k,
        model_v,
        BatchTarget::ConstrainedImprovement { best },
        threshold,
        xs.len(),
        n_samples,
        sampler,
        seed,
    )?;
    let refs: Vec<&[f64]> = xs.iter().map(|p| &p[..]).collect();
    acq.estimate(&refs)
}
