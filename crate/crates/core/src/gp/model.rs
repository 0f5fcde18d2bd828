use nalgebra::{Cholesky, DMatrix, DVector};

use super::kernel::matern52_raw;
use super::{Channel, GpHyperparameters, PosteriorGaussian, Standardization};
use crate::error::{Error, Result};
use crate::qmc::{normal_points, SamplerKind};
use crate::space::UnitPoint;

pub(crate) const JITTER_START: f64 = 1e-10;
pub(crate) const JITTER_MAX: f64 = 1e-4;

/// Lower Cholesky factor of `m`, adding diagonal jitter `1e-10, 1e-9, …, 1e-4`
/// when the plain factorization fails. Returns the factor and the jitter used.
pub(crate) fn cholesky_jittered(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some((c.unpack(), 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut mj = m.clone();
        for i in 0..mj.nrows() {
            mj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(mj) {
            return Some((c.unpack(), jitter));
        }
        jitter *= 10.0;
    }
    None
}

/// Kernel matrix between two point lists.
pub(crate) fn cross_kernel(a: &[&[f64]], b: &[&[f64]], hyper: &GpHyperparameters) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        matern52_raw(a[i], b[j], &hyper.lengthscales, hyper.signal_variance)
    })
}

/// A fitted (or fixed-hyperparameter) exact GP. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: GpHyperparameters,
    standardize: Standardization,
    channel: Channel,
    inputs: Vec<UnitPoint>,
    targets: DVector<f64>,
    factor: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Joint Gaussian posterior over a set of points, ready for reparameterized
/// sampling: `sample = mean + L z`.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    pub mean: Vec<f64>,
    /// Row-major lower-triangular factor of the posterior covariance.
    pub factor: Vec<f64>,
}

impl JointPosterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Writes `mean + L z` into `out`.
    #[inline]
    pub fn transform(&self, z: &[f64], out: &mut [f64]) {
        let m = self.mean.len();
        for (i, (o, &mu)) in out.iter_mut().zip(&self.mean).enumerate() {
            let row = &self.factor[i * m..i * m + i + 1];
            *o = row.iter().zip(z).fold(mu, |acc, (l, zz)| acc + l * zz);
        }
    }
}

impl GpModel {
    /// Builds a model with given hyperparameters, standardizing `raw_targets`
    /// with the channel rule.
    pub fn with_hyperparameters(
        inputs: Vec<UnitPoint>,
        raw_targets: &[f64],
        channel: Channel,
        hyper: GpHyperparameters,
    ) -> Result<Self> {
        check_training_data(&inputs, raw_targets)?;
        if inputs[0].len() != hyper.lengthscales.len() {
            return Err(Error::invalid(format!(
                "inputs have {} dimensions but {} lengthscales were given",
                inputs[0].len(),
                hyper.lengthscales.len()
            )));
        }
        hyper.validate()?;
        let standardize = Standardization::for_channel(channel, raw_targets)?;
        let targets = DVector::from_iterator(
            raw_targets.len(),
            raw_targets.iter().map(|&v| standardize.apply(v)),
        );
        Self::assemble(inputs, targets, standardize, channel, hyper)
    }

    pub(crate) fn assemble(
        inputs: Vec<UnitPoint>,
        targets: DVector<f64>,
        standardize: Standardization,
        channel: Channel,
        hyper: GpHyperparameters,
    ) -> Result<Self> {
        let k = regularized_kernel(&inputs, &hyper);
        let (factor, jitter) = cholesky_jittered(&k).ok_or_else(|| {
            Error::Numeric(format!(
                "kernel matrix not positive definite even with jitter {JITTER_MAX:e}"
            ))
        })?;
        let alpha = solve_with_factor(&factor, &targets);
        Ok(Self {
            hyper,
            standardize,
            channel,
            inputs,
            targets,
            factor,
            alpha,
            jitter,
        })
    }

    pub fn hyperparameters(&self) -> &GpHyperparameters {
        &self.hyper
    }

    pub fn standardization(&self) -> Standardization {
        self.standardize
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn inputs(&self) -> &[UnitPoint] {
        &self.inputs
    }

    pub fn dim(&self) -> usize {
        self.hyper.lengthscales.len()
    }

    /// Standardized training targets.
    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Lower-triangular factor of `K + σ_n² I` (plus any jitter).
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Max-norm residual of `(K + σ_n² I) α − y`.
    pub fn alpha_residual(&self) -> f64 {
        let k = regularized_kernel(&self.inputs, &self.hyper);
        (k * &self.alpha - &self.targets).amax()
    }

    /// Prior standard deviation of the latent function, standardized units.
    pub fn prior_std(&self) -> f64 {
        self.hyper.signal_variance.sqrt()
    }

    fn kernel_column(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|xi| matern52_raw(xi, x, &self.hyper.lengthscales, self.hyper.signal_variance)),
        )
    }

    /// Latent posterior at `x` in standardized units.
    pub fn posterior(&self, x: &[f64]) -> PosteriorGaussian {
        debug_assert_eq!(x.len(), self.dim());
        let kx = self.kernel_column(x);
        let mean = kx.dot(&self.alpha);
        let v = self
            .factor
            .solve_lower_triangular(&kx)
            .expect("factor has a nonzero diagonal");
        let var = self.hyper.signal_variance - v.norm_squared();
        PosteriorGaussian::new(mean, var.max(0.0).sqrt())
    }

    /// Latent posterior at `x` in raw output units.
    pub fn predict(&self, x: &[f64]) -> PosteriorGaussian {
        self.destandardize(self.posterior(x))
    }

    pub fn destandardize(&self, g: PosteriorGaussian) -> PosteriorGaussian {
        PosteriorGaussian::new(self.standardize.invert(g.mean), self.standardize.scale * g.std)
    }

    /// Posterior mean vector and covariance matrix at `xs`, standardized units.
    pub fn joint_posterior(&self, xs: &[&[f64]]) -> (Vec<f64>, DMatrix<f64>) {
        let train: Vec<&[f64]> = self.inputs.iter().map(|p| &p[..]).collect();
        let kxs = cross_kernel(&train, xs, &self.hyper);
        let mean = (kxs.transpose() * &self.alpha).as_slice().to_vec();
        let v = self
            .factor
            .solve_lower_triangular(&kxs)
            .expect("factor has a nonzero diagonal");
        let prior = cross_kernel(xs, xs, &self.hyper);
        let cov = prior - v.transpose() * v;
        (mean, cov)
    }

    /// Joint posterior at `xs` with its covariance factorized for sampling.
    pub fn joint_factor(&self, xs: &[&[f64]]) -> Result<JointPosterior> {
        if xs.is_empty() {
            return Err(Error::invalid("joint posterior needs at least one point"));
        }
        let (mean, mut cov) = self.joint_posterior(xs);
        let m = xs.len();
        // symmetrize away round-off before factorizing
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        let (l, _) = cholesky_jittered(&cov).ok_or_else(|| {
            Error::Numeric("posterior covariance not factorizable after jitter escalation".into())
        })?;
        let mut factor = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                factor[i * m + j] = l[(i, j)];
            }
        }
        Ok(JointPosterior { mean, factor })
    }
}

/// `n_samples × |xs|` matrix of joint posterior draws (standardized units),
/// from independent pseudo-random normal base draws.
pub fn joint_posterior_samples(
    model: &GpModel,
    xs: &[UnitPoint],
    n_samples: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let refs: Vec<&[f64]> = xs.iter().map(|p| &p[..]).collect();
    let joint = model.joint_factor(&refs)?;
    let m = xs.len();
    let z = normal_points(SamplerKind::Uniform, n_samples, m, seed)?;
    let mut out = DMatrix::zeros(n_samples, m);
    let mut row = vec![0.0; m];
    for s in 0..n_samples {
        joint.transform(&z[s * m..(s + 1) * m], &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(s, j)] = *v;
        }
    }
    Ok(out)
}

pub(crate) fn regularized_kernel(inputs: &[UnitPoint], hyper: &GpHyperparameters) -> DMatrix<f64> {
    let refs: Vec<&[f64]> = inputs.iter().map(|p| &p[..]).collect();
    let mut k = cross_kernel(&refs, &refs, hyper);
    let nv = hyper.noise_std * hyper.noise_std;
    for i in 0..k.nrows() {
        k[(i, i)] += nv;
    }
    k
}

pub(crate) fn solve_with_factor(l: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let w = l.solve_lower_triangular(y).expect("nonzero diagonal");
    l.tr_solve_lower_triangular(&w).expect("nonzero diagonal")
}

pub(crate) fn check_training_data(inputs: &[UnitPoint], raw_targets: &[f64]) -> Result<()> {
    if inputs.len() < 2 {
        return Err(Error::invalid(format!(
            "GP needs at least 2 training points, got {}",
            inputs.len()
        )));
    }
    if inputs.len() != raw_targets.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} targets",
            inputs.len(),
            raw_targets.len()
        )));
    }
    let d = inputs[0].len();
    if inputs.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("training inputs have inconsistent dimensions"));
    }
    for i in 0..inputs.len() {
        for j in 0..i {
            if inputs[i].distance(&inputs[j]) < 1e-10 {
                return Err(Error::DegenerateData(format!(
                    "training points {j} and {i} coincide"
                )));
            }
        }
    }
    Ok(())
}
