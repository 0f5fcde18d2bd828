//! Type-II maximum likelihood for the kernel hyperparameters.
//!
//! The search runs in log space over `(log ℓ_1, …, log ℓ_d, log σ_f²)` with box
//! bounds, using a projected quasi-Newton ascent from several log-uniform
//! random starts. The noise level stays at [`NOISE_STD`](super::NOISE_STD).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{matern52_lengthscale_factor, matern52_of_r, scaled_distance};
use super::model::{check_training_data, cholesky_jittered, regularized_kernel, solve_with_factor, GpModel};
use super::{Channel, GpHyperparameters, Standardization, LENGTHSCALE_BOUNDS, SIGNAL_VARIANCE_BOUNDS};
use crate::error::{Error, Result};
use crate::par;
use crate::space::UnitPoint;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Whether each input dimension gets its own lengthscale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    #[default]
    Ard,
    Isotropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub kernel: KernelShape,
    /// Range for the log-uniform initial lengthscales.
    pub init_lengthscale_range: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 200,
            kernel: KernelShape::Ard,
            init_lengthscale_range: (1e-2, 1e1),
        }
    }
}

/// Log marginal likelihood and its gradient with respect to
/// `(log ℓ_1, …, log ℓ_d, log σ_f²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmlEvaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// `−½ yᵀα − Σ log L_ii − (n/2) log 2π` for standardized targets `y`.
pub fn log_marginal_likelihood(
    inputs: &[UnitPoint],
    targets: &[f64],
    hyper: &GpHyperparameters,
) -> Result<LmlEvaluation> {
    hyper.validate()?;
    let n = inputs.len();
    if n == 0 || n != targets.len() {
        return Err(Error::invalid(format!("{n} inputs vs {} targets", targets.len())));
    }
    let d = hyper.lengthscales.len();
    let k = regularized_kernel(inputs, hyper);
    let (l, _) = cholesky_jittered(&k)
        .ok_or_else(|| Error::Numeric("kernel matrix not positive definite".into()))?;
    let y = DVector::from_column_slice(targets);
    let alpha = solve_with_factor(&l, &y);
    let log_det_half: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
    let value = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * n as f64 * LN_2PI;

    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let k_inv = l_inv.transpose() * &l_inv;

    // ∂LML/∂θ = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ)
    let mut grad = vec![0.0; d + 1];
    let sv = hyper.signal_variance;
    for a in 0..n {
        // diagonal: ∂K_aa/∂log σ_f² = σ_f², lengthscale terms vanish
        let w_aa = alpha[a] * alpha[a] - k_inv[(a, a)];
        grad[d] += 0.5 * w_aa * sv;
        for b in 0..a {
            let w = 2.0 * (alpha[a] * alpha[b] - k_inv[(a, b)]);
            let r = scaled_distance(&inputs[a], &inputs[b], &hyper.lengthscales);
            grad[d] += 0.5 * w * matern52_of_r(r, sv);
            let factor = 0.5 * w * matern52_lengthscale_factor(r, sv);
            for i in 0..d {
                let t = (inputs[a][i] - inputs[b][i]) / hyper.lengthscales[i];
                grad[i] += factor * t * t;
            }
        }
    }
    Ok(LmlEvaluation {
        value,
        gradient: grad,
    })
}

/// Fits both kernel hyperparameters and standardization with default options.
pub fn fit(inputs: Vec<UnitPoint>, raw_targets: &[f64], channel: Channel, seed: u64) -> Result<GpModel> {
    fit_with(inputs, raw_targets, channel, seed, &FitOptions::default())
}

pub fn fit_with(
    inputs: Vec<UnitPoint>,
    raw_targets: &[f64],
    channel: Channel,
    seed: u64,
    options: &FitOptions,
) -> Result<GpModel> {
    check_training_data(&inputs, raw_targets)?;
    if options.restarts == 0 || options.max_iters == 0 {
        return Err(Error::invalid("fit needs at least one restart and one iteration"));
    }
    let d = inputs[0].len();
    let standardize = Standardization::for_channel(channel, raw_targets)?;
    let targets: Vec<f64> = raw_targets.iter().map(|&v| standardize.apply(v)).collect();

    let n_ls = match options.kernel {
        KernelShape::Ard => d,
        KernelShape::Isotropic => 1,
    };
    let (lo_init, hi_init) = options.init_lengthscale_range;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..options.restarts)
        .map(|_| {
            let mut theta: Vec<f64> = (0..n_ls)
                .map(|_| rng.random_range(lo_init.ln()..=hi_init.ln()))
                .collect();
            theta.push(0.0);
            theta
        })
        .collect();

    let mut lower = vec![LENGTHSCALE_BOUNDS.0.ln(); n_ls];
    lower.push(SIGNAL_VARIANCE_BOUNDS.0.ln());
    let mut upper = vec![LENGTHSCALE_BOUNDS.1.ln(); n_ls];
    upper.push(SIGNAL_VARIANCE_BOUNDS.1.ln());

    let objective = |theta: &[f64]| -> (f64, Vec<f64>) {
        let hyper = unpack(theta, d);
        match log_marginal_likelihood(&inputs, &targets, &hyper) {
            Ok(eval) if eval.value.is_finite() => {
                let mut g = eval.gradient;
                if n_ls == 1 {
                    let sum_ls: f64 = g[..d].iter().sum();
                    g = vec![sum_ls, g[d]];
                }
                (eval.value, g)
            }
            _ => (f64::NEG_INFINITY, vec![0.0; theta.len()]),
        }
    };

    let results = par::map_slice(&starts, |x0| {
        maximize_in_box(&objective, x0, &lower, &upper, options.max_iters)
    });
    let values: Vec<f64> = results.iter().map(|(_, v)| *v).collect();
    let best = par::argmax(&values)
        .filter(|&i| values[i].is_finite())
        .ok_or_else(|| Error::Numeric("log marginal likelihood not finite at any restart".into()))?;
    let hyper = unpack(&results[best].0, d);
    GpModel::assemble(
        inputs,
        DVector::from_vec(targets),
        standardize,
        channel,
        hyper,
    )
}

fn unpack(theta: &[f64], d: usize) -> GpHyperparameters {
    let n_ls = theta.len() - 1;
    let lengthscales = if n_ls == 1 {
        vec![theta[0].exp(); d]
    } else {
        theta[..n_ls].iter().map(|t| t.exp()).collect()
    };
    GpHyperparameters {
        lengthscales,
        signal_variance: theta[n_ls].exp(),
        noise_std: super::NOISE_STD,
    }
}

/// Projected BFGS ascent within `[lower, upper]`. Returns the final point and
/// its value.
pub(crate) fn maximize_in_box<F>(f: &F, x0: &[f64], lower: &[f64], upper: &[f64], max_iters: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let m = x0.len();
    let project = |x: &mut [f64]| {
        for i in 0..m {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return (x, fx);
    }
    let mut h = DMatrix::<f64>::identity(m, m);
    let max_step = 2.0;

    for _ in 0..max_iters {
        // variables pinned at a bound with the gradient pushing outward
        let active: Vec<bool> = (0..m)
            .map(|i| (x[i] <= lower[i] && g[i] < 0.0) || (x[i] >= upper[i] && g[i] > 0.0))
            .collect();
        let pg_norm = (0..m).filter(|&i| !active[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm < 1e-7 {
            break;
        }
        let gv = DVector::from_iterator(m, (0..m).map(|i| if active[i] { 0.0 } else { g[i] }));
        let mut dir = &h * &gv;
        for i in 0..m {
            if active[i] {
                dir[i] = 0.0;
            }
        }
        if dir.dot(&gv) <= 0.0 {
            h = DMatrix::identity(m, m);
            dir = gv.clone();
        }
        let dmax = dir.amax();
        if dmax == 0.0 {
            break;
        }
        let mut t = (max_step / dmax).min(1.0);
        let mut accepted = None;
        while t > 1e-12 {
            let mut xn: Vec<f64> = (0..m).map(|i| x[i] + t * dir[i]).collect();
            project(&mut xn);
            let step: f64 = (0..m).map(|i| g[i] * (xn[i] - x[i])).sum();
            let (fnew, gnew) = f(&xn);
            if fnew.is_finite() && fnew >= fx + 1e-4 * step {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else { break };
        let s = DVector::from_iterator(m, (0..m).map(|i| xn[i] - x[i]));
        // curvature of the negated objective
        let yv = DVector::from_iterator(m, (0..m).map(|i| g[i] - gnew[i]));
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i_m = DMatrix::<f64>::identity(m, m);
            let a = &i_m - rho * &s * yv.transpose();
            let b = &i_m - rho * &yv * s.transpose();
            h = &a * &h * &b + rho * &s * s.transpose();
        }
        let improvement = fnew - fx;
        x = xn;
        fx = fnew;
        g = gnew;
        if improvement.abs() < 1e-12 * fx.abs().max(1.0) {
            break;
        }
    }
    (x, fx)
}
