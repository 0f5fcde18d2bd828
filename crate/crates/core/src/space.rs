//! Design space: named box-bounded dimensions, unit-cube scaling and
//! Latin hypercube designs.

use std::ops::Deref;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named design variable with closed physical bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl Dimension {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
        }
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Ordered list of dimensions. Construction validates bounds and names, so
/// every value of this type is well-formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct ParameterSpace {
    dims: Vec<Dimension>,
}

impl TryFrom<Vec<Dimension>> for ParameterSpace {
    type Error = Error;

    fn try_from(dims: Vec<Dimension>) -> Result<Self> {
        ParameterSpace::new(dims)
    }
}

impl From<ParameterSpace> for Vec<Dimension> {
    fn from(space: ParameterSpace) -> Self {
        space.dims
    }
}

impl ParameterSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("parameter space needs at least one dimension"));
        }
        for (i, d) in dims.iter().enumerate() {
            if d.name.trim().is_empty() {
                return Err(Error::invalid(format!("dimension {i} has an empty name")));
            }
            if !(d.lower.is_finite() && d.upper.is_finite()) || d.upper <= d.lower {
                return Err(Error::invalid(format!(
                    "dimension `{}` needs finite bounds with upper > lower (got [{}, {}])",
                    d.name, d.lower, d.upper
                )));
            }
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::invalid(format!("duplicate dimension name `{}`", d.name)));
            }
        }
        Ok(Self { dims })
    }

    /// The three prechamber geometry parameters, in millimetres.
    pub fn prechamber() -> Self {
        Self::new(vec![
            Dimension::new("d_bottle", 8.0, 12.0),
            Dimension::new("d_bore", 0.75, 1.15),
            Dimension::new("h_neck", 15.0, 20.0),
        ])
        .expect("static space is valid")
    }

    /// `[0,1]^d` with names `x1..xd`.
    pub fn unit_cube(d: usize) -> Result<Self> {
        Self::new((1..=d).map(|i| Dimension::new(format!("x{i}"), 0.0, 1.0)).collect())
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.dims.iter().map(|d| d.name.as_str())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::invalid(format!(
                "point has {len} coordinates, space has {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Checks that a physical point lies inside the (closed) box.
    pub fn check_bounds(&self, x: &[f64]) -> Result<()> {
        self.check_len(x.len())?;
        for (d, &v) in self.dims.iter().zip(x) {
            if !(v >= d.lower && v <= d.upper) {
                return Err(Error::Bounds {
                    dim: d.name.clone(),
                    value: v,
                    lower: d.lower,
                    upper: d.upper,
                });
            }
        }
        Ok(())
    }

    pub fn to_unit(&self, x: &[f64]) -> Result<UnitPoint> {
        self.check_bounds(x)?;
        let coords = self
            .dims
            .iter()
            .zip(x)
            .map(|(d, &v)| ((v - d.lower) / d.width()).clamp(0.0, 1.0))
            .collect();
        Ok(UnitPoint(coords))
    }

    pub fn from_unit(&self, u: &UnitPoint) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        Ok(self
            .dims
            .iter()
            .zip(u.iter())
            .map(|(d, &c)| {
                if c >= 1.0 {
                    d.upper
                } else {
                    d.lower + c * d.width()
                }
            })
            .collect())
    }
}

/// A point of the closed unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitPoint(Vec<f64>);

impl UnitPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("unit point must have at least one coordinate"));
        }
        if let Some((i, c)) = coords.iter().enumerate().find(|(_, c)| !(0.0..=1.0).contains(*c)) {
            return Err(Error::invalid(format!("unit coordinate {i} = {c} outside [0, 1]")));
        }
        Ok(Self(coords))
    }

    /// Clamps each coordinate into `[0,1]`; NaN maps to 0.
    pub fn clamped(coords: Vec<f64>) -> Self {
        Self(
            coords
                .into_iter()
                .map(|c| if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) })
                .collect(),
        )
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Euclidean distance in the unit cube.
    pub fn distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<f64>> for UnitPoint {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitPoint::new(v)
    }
}

impl From<UnitPoint> for Vec<f64> {
    fn from(u: UnitPoint) -> Self {
        u.0
    }
}

impl Deref for UnitPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Where a Latin hypercube sample sits inside its stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LhsPlacement {
    /// Uniformly at random within the stratum.
    #[default]
    Random,
    /// At the stratum midpoint.
    Midpoint,
}

/// Randomized Latin hypercube design with uniform in-stratum placement.
pub fn latin_hypercube(space: &ParameterSpace, n: usize, seed: u64) -> Result<Vec<UnitPoint>> {
    latin_hypercube_with(space, n, seed, LhsPlacement::Random)
}

/// Permutation-based Latin hypercube: along every axis the `n` samples fall in
/// the `n` equal-width strata of `[0,1)`, one per stratum.
pub fn latin_hypercube_with(
    space: &ParameterSpace,
    n: usize,
    seed: u64,
    placement: LhsPlacement,
) -> Result<Vec<UnitPoint>> {
    if n == 0 {
        return Err(Error::invalid("latin hypercube needs n >= 1"));
    }
    let d = space.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 1.0 / n as f64;
    let mut points = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(&mut rng);
        for (point, &s) in points.iter_mut().zip(&strata) {
            let offset = match placement {
                LhsPlacement::Random => rng.random::<f64>(),
                LhsPlacement::Midpoint => 0.5,
            };
            let lo = s as f64 * width;
            let hi = (s + 1) as f64 * width;
            let mut c = lo + offset * width;
            // rounding may land exactly on the next stratum edge
            if c >= hi {
                c = hi.next_down();
            }
            point[j] = c.max(lo);
        }
    }
    Ok(points.into_iter().map(UnitPoint).collect())
}
