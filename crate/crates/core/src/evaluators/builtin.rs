use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Evaluator;
use crate::error::{Error, Result};
use crate::space::ParameterSpace;

/// Analytic stand-in for the prechamber simulation.
///
/// With `u` the unit-cube coordinates of `(d_bottle, d_bore, h_neck)`:
///
/// ```text
/// k = 60 + 220 · exp(−(u2 − 0.33)² / 0.08) · (0.4 + 0.6 · u1 · u3)
/// v = 12 +  18 · exp(−(u2 − 0.25)² / 0.10) · (0.5 + 0.5 · u1)
/// ```
///
/// `k` peaks at a small but not minimal bore and grows with bottle diameter
/// times neck height; `v` rises with small bores and wide bottles, so the
/// 25 m/s limit binds where `k` is large.
pub fn proxy_prechamber(x: &[f64]) -> Result<(f64, f64)> {
    let u = ParameterSpace::prechamber().to_unit(x)?;
    let (u1, u2, u3) = (u[0], u[1], u[2]);
    let k = 60.0 + 220.0 * (-(u2 - 0.33).powi(2) / 0.08).exp() * (0.4 + 0.6 * u1 * u3);
    let v = 12.0 + 18.0 * (-(u2 - 0.25).powi(2) / 0.10).exp() * (0.5 + 0.5 * u1);
    Ok((k, v))
}

/// `k = −(x1 − 0.7)² − (x2 − 0.7)²`, `v = x1 + x2`, on the unit square with
/// threshold 1. Constrained optimum `(0.5, 0.5)`, `k = −0.08`.
pub fn benchmark_quadratic(x: &[f64]) -> Result<(f64, f64)> {
    ParameterSpace::unit_cube(2)?.check_bounds(x)?;
    let k = -(x[0] - 0.7).powi(2) - (x[1] - 0.7).powi(2);
    Ok((k, x[0] + x[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinEvaluator {
    Proxy,
    Quadratic,
}

impl FromStr for BuiltinEvaluator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proxy" => Ok(Self::Proxy),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(Error::invalid(format!(
                "unknown evaluator `{other}` (expected proxy or quadratic)"
            ))),
        }
    }
}

impl Evaluator for BuiltinEvaluator {
    fn name(&self) -> &str {
        match self {
            Self::Proxy => "proxy",
            Self::Quadratic => "quadratic",
        }
    }

    fn space(&self) -> ParameterSpace {
        match self {
            Self::Proxy => ParameterSpace::prechamber(),
            Self::Quadratic => ParameterSpace::unit_cube(2).expect("valid"),
        }
    }

    fn threshold(&self) -> f64 {
        match self {
            Self::Proxy => 25.0,
            Self::Quadratic => 1.0,
        }
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, f64)> {
        match self {
            Self::Proxy => proxy_prechamber(x),
            Self::Quadratic => benchmark_quadratic(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn physical(u: [f64; 3]) -> Vec<f64> {
        ParameterSpace::prechamber()
            .from_unit(&crate::space::UnitPoint::new(u.to_vec()).unwrap())
            .unwrap()
    }

    #[test]
    fn proxy_closed_form_points() {
        let (k, _) = proxy_prechamber(&physical([0.0, 0.33, 0.0])).unwrap();
        assert!((k - 148.0).abs() < 1e-9, "{k}");
        let (k, _) = proxy_prechamber(&physical([1.0, 0.33, 1.0])).unwrap();
        assert!((k - 280.0).abs() < 1e-9, "{k}");
    }

    #[test]
    fn proxy_rejects_out_of_range() {
        assert!(matches!(
            proxy_prechamber(&[7.9, 1.0, 16.0]),
            Err(Error::Bounds { .. })
        ));
    }

    #[test]
    fn proxy_trends() {
        let n = 21;
        let h = 1e-6;
        let at = |u: [f64; 3]| proxy_prechamber(&physical(u)).unwrap();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let u = [a as f64 / 20.0, b as f64 / 20.0, c as f64 / 20.0];
                    let (k, v) = at(u);
                    if u[0] + h <= 1.0 {
                        let (k1, v1) = at([u[0] + h, u[1], u[2]]);
                        assert!(k1 >= k && v1 >= v);
                    }
                    if u[2] + h <= 1.0 {
                        assert!(at([u[0], u[1], u[2] + h]).0 >= k);
                    }
                }
            }
        }
        // interior maximum in u2 at (u1, u3) = (1, 1)
        let ks: Vec<f64> = (0..=200).map(|i| at([1.0, i as f64 / 200.0, 1.0]).0).collect();
        let arg = crate::par::argmax(&ks).unwrap();
        assert!(arg > 0 && arg < 200);
    }

    #[test]
    fn quadratic_facts() {
        assert_eq!(benchmark_quadratic(&[0.7, 0.7]).unwrap().0, 0.0);
        assert!(benchmark_quadratic(&[0.7, 0.7]).unwrap().1 > 1.0);
        let (k, v) = benchmark_quadratic(&[0.5, 0.5]).unwrap();
        assert!((k + 0.08).abs() < 1e-15);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn builtin_parse() {
        assert_eq!("proxy".parse::<BuiltinEvaluator>().unwrap(), BuiltinEvaluator::Proxy);
        assert!("cfd".parse::<BuiltinEvaluator>().is_err());
        assert_eq!(BuiltinEvaluator::Quadratic.space().len(), 2);
    }
}
