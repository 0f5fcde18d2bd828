//! Randomized quasi-Monte Carlo point sets.
//!
//! Sobol points (Joe-Kuo direction numbers) with a random digital shift: each
//! dimension's 64-bit integer coordinate is XOR-ed with a seeded mask. The
//! shift keeps the net structure of the sequence and makes every point lie
//! strictly inside the unit cube.

use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sobol::params::JoeKuoD6;
use sobol::Sobol;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

static PARAMS: LazyLock<JoeKuoD6> = LazyLock::new(JoeKuoD6::standard);

/// Highest dimension supported by the bundled direction numbers.
pub fn max_dims() -> usize {
    use sobol::SobolParams;
    <JoeKuoD6 as SobolParams<u32>>::max_dims(&PARAMS)
}

/// How base points for Monte Carlo and raw sampling are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Digitally shifted Sobol points.
    #[default]
    Sobol,
    /// Independent pseudo-random draws (ChaCha8).
    Uniform,
}

/// `n` points of `[0,1)^dims`, row-major (`n × dims`), strictly inside the cube.
pub fn uniform_points(kind: SamplerKind, n: usize, dims: usize, seed: u64) -> Result<Vec<f64>> {
    if dims == 0 {
        return Err(Error::invalid("point set needs at least one dimension"));
    }
    match kind {
        SamplerKind::Sobol => shifted_sobol(n, dims, seed),
        SamplerKind::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n * dims).map(|_| rng.random::<f64>()).collect())
        }
    }
}

fn shifted_sobol(n: usize, dims: usize, seed: u64) -> Result<Vec<f64>> {
    if dims > max_dims() {
        return Err(Error::invalid(format!(
            "Sobol sequence supports at most {} dimensions, requested {dims}",
            max_dims()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<u64> = (0..dims).map(|_| rng.random()).collect();
    let scale = 1.0 / (1u64 << 53) as f64;
    let mut out = Vec::with_capacity(n * dims);
    for point in Sobol::<u64>::new(dims, &*PARAMS).take(n) {
        for (v, s) in point.into_iter().zip(&shifts) {
            out.push((((v ^ s) >> 11) as f64 + 0.5) * scale);
        }
    }
    if out.len() != n * dims {
        return Err(Error::invalid(format!("Sobol sequence exhausted before {n} points")));
    }
    Ok(out)
}

/// Standard-normal base samples, row-major `n × dims`.
pub fn normal_points(kind: SamplerKind, n: usize, dims: usize, seed: u64) -> Result<Vec<f64>> {
    match kind {
        SamplerKind::Sobol => {
            let std = Normal::standard();
            let u = shifted_sobol(n, dims, seed)?;
            Ok(u.into_iter().map(|p| std.inverse_cdf(p)).collect())
        }
        SamplerKind::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n * dims).map(|_| rng.sample(StandardNormal)).collect())
        }
    }
}
