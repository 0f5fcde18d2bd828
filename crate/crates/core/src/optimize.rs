//! Inner-loop maximization of the batch acquisition over the unit cube.
//!
//! Quasi-random batches are scored, the best `restarts` of them are refined
//! with a bounded compass (pattern) search, and the best refined batch wins.

use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionConfig, BatchAcquisition, BatchMode};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::par;
use crate::qmc::uniform_points;
use crate::seeds::derive_seed;
use crate::space::UnitPoint;

const INITIAL_STEP: f64 = 0.1;
const MIN_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerBudget {
    /// Quasi-random batches scored before local refinement.
    pub raw_samples: usize,
    /// How many of the best raw batches are refined.
    pub restarts: usize,
    pub max_iters_per_restart: usize,
    /// A poll must improve the acquisition by more than `tol · |value|`.
    pub convergence_tol: f64,
}

impl Default for OptimizerBudget {
    fn default() -> Self {
        Self {
            raw_samples: 256,
            restarts: 10,
            max_iters_per_restart: 200,
            convergence_tol: 1e-6,
        }
    }
}

impl OptimizerBudget {
    pub fn validate(&self) -> Result<()> {
        if self.raw_samples == 0 || self.restarts == 0 || self.max_iters_per_restart == 0 {
            return Err(Error::invalid("optimizer budget counts must be at least 1"));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::invalid("convergence tolerance must be positive"));
        }
        Ok(())
    }
}

/// Result of one batch proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub points: Vec<UnitPoint>,
    /// Acquisition value of the returned batch.
    pub value: f64,
    /// Best value among the raw quasi-random batches.
    pub raw_best: f64,
}

/// Maximizes the configured batch acquisition. `best` is the incumbent
/// objective value in raw units; `None` switches CEI to feasibility search.
pub fn propose_batch(
    model_k: &GpModel,
    model_v: &GpModel,
    config: &AcquisitionConfig,
    best: Option<f64>,
    budget: &OptimizerBudget,
    seed: u64,
) -> Result<Proposal> {
    config.validate()?;
    budget.validate()?;
    match config.batch_mode {
        BatchMode::Joint => {
            let acq = BatchAcquisition::from_config(model_k, model_v, config, best, config.q, derive_seed(seed, 0))?;
            let (flat, value, raw_best) = maximize(&acq, &[], budget, config, derive_seed(seed, 1))?;
            Ok(Proposal {
                points: to_points(&flat, model_k.dim()),
                value,
                raw_best,
            })
        }
        BatchMode::Sequential => {
            let d = model_k.dim();
            let mut fixed: Vec<f64> = Vec::with_capacity(config.q * d);
            let mut value = 0.0;
            let mut raw_first = f64::NEG_INFINITY;
            for j in 1..=config.q {
                let acq = BatchAcquisition::from_config(
                    model_k,
                    model_v,
                    config,
                    best,
                    j,
                    derive_seed(seed, 2 * j as u64),
                )?;
                let (flat, v, raw) = maximize(&acq, &fixed, budget, config, derive_seed(seed, 2 * j as u64 + 1))?;
                if j == 1 {
                    raw_first = raw;
                }
                fixed.extend_from_slice(&flat);
                value = v;
            }
            Ok(Proposal {
                points: to_points(&fixed, d),
                value,
                raw_best: raw_first,
            })
        }
    }
}

fn to_points(flat: &[f64], d: usize) -> Vec<UnitPoint> {
    flat.chunks(d).map(|c| UnitPoint::clamped(c.to_vec())).collect()
}

/// Optimizes the free coordinates appended after `fixed`. Returns the free
/// coordinates, the final value and the best raw-sample value.
fn maximize(
    acq: &BatchAcquisition<'_>,
    fixed: &[f64],
    budget: &OptimizerBudget,
    config: &AcquisitionConfig,
    seed: u64,
) -> Result<(Vec<f64>, f64, f64)> {
    let free = acq.q() * acq.dim() - fixed.len();
    let eval = |x: &[f64]| {
        if fixed.is_empty() {
            acq.evaluate_flat(x)
        } else {
            let mut full = Vec::with_capacity(fixed.len() + x.len());
            full.extend_from_slice(fixed);
            full.extend_from_slice(x);
            acq.evaluate_flat(&full)
        }
    };

    let raw = uniform_points(config.sampler, budget.raw_samples, free, seed)?;
    let candidates: Vec<&[f64]> = raw.chunks(free).collect();
    let scores = par::map_slice(&candidates, |c| eval(c));

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let raw_best = scores[order[0]];
    let starts: Vec<(Vec<f64>, f64)> = order
        .iter()
        .take(budget.restarts)
        .map(|&i| (candidates[i].to_vec(), scores[i]))
        .collect();

    let refined = par::map_slice(&starts, |(x0, f0)| pattern_search(&eval, x0.clone(), *f0, budget));
    let values: Vec<f64> = refined.iter().map(|(_, v)| *v).collect();
    let best = par::argmax(&values).unwrap_or(0);
    let (x, v) = refined.into_iter().nth(best).expect("at least one restart");
    Ok((x, v, raw_best))
}

/// Compass search on `[0,1]^m`: poll ±step along each axis, move to the best
/// improving poll, halve the step when no poll improves.
pub(crate) fn pattern_search<F>(f: &F, mut x: Vec<f64>, mut fx: f64, budget: &OptimizerBudget) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut step = INITIAL_STEP;
    let mut trial = x.clone();
    for _ in 0..budget.max_iters_per_restart {
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let c = (x[i] + sign * step).clamp(0.0, 1.0);
                if c == x[i] {
                    continue;
                }
                trial.copy_from_slice(&x);
                trial[i] = c;
                let ft = f(&trial);
                if best.is_none_or(|(_, _, fb)| ft > fb) {
                    best = Some((i, c, ft));
                }
            }
        }
        match best {
            Some((i, c, fb)) if fb - fx > budget.convergence_tol * fx.abs() && fb > fx => {
                x[i] = c;
                fx = fb;
            }
            _ => {
                step *= 0.5;
                if step < MIN_STEP {
                    break;
                }
            }
        }
    }
    (x, fx)
}
