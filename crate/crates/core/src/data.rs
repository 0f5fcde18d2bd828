//! Observations of the black box and the accumulated dataset.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ParameterSpace, UnitPoint};

/// Minimum unit-cube distance between two stored designs.
pub const DUPLICATE_TOL: f64 = 1e-10;

/// One evaluated design: physical coordinates, objective `k` and constraint
/// value `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub k: f64,
    pub v: f64,
}

impl Observation {
    pub fn new(x: Vec<f64>, k: f64, v: f64) -> Self {
        Self { x, k, v }
    }

    pub fn is_feasible(&self, threshold: f64) -> bool {
        self.v <= threshold
    }
}

/// Where a row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Provenance {
    Doe,
    /// Proposed by the given (1-based) optimization iteration.
    BoIter(u32),
    Manual,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Doe => f.write_str("doe"),
            Provenance::BoIter(n) => write!(f, "bo_iter_{n}"),
            Provenance::Manual => f.write_str("manual"),
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doe" => Ok(Provenance::Doe),
            "manual" => Ok(Provenance::Manual),
            _ => s
                .strip_prefix("bo_iter_")
                .and_then(|n| n.parse().ok())
                .map(Provenance::BoIter)
                .ok_or_else(|| Error::invalid(format!("unknown provenance tag `{s}`"))),
        }
    }
}

impl TryFrom<String> for Provenance {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Provenance> for String {
    fn from(p: Provenance) -> Self {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(flatten)]
    pub obs: Observation,
    pub provenance: Provenance,
}

/// Ordered observations. Rows are only added through [`Dataset::push`],
/// which enforces bounds, finiteness and the no-duplicate rule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.rows.iter().map(|r| &r.obs)
    }

    /// Checks that `obs` could be appended, without appending it.
    pub fn check(&self, space: &ParameterSpace, obs: &Observation) -> Result<UnitPoint> {
        let u = space.to_unit(&obs.x)?;
        if !obs.k.is_finite() || !obs.v.is_finite() {
            return Err(Error::Data {
                row: self.rows.len(),
                message: format!("non-finite observation k={} v={}", obs.k, obs.v),
            });
        }
        if let Some(i) = self.position_near(space, &u) {
            return Err(Error::DegenerateData(format!(
                "design {:?} duplicates dataset row {i}",
                obs.x
            )));
        }
        Ok(u)
    }

    pub fn push(&mut self, space: &ParameterSpace, obs: Observation, provenance: Provenance) -> Result<()> {
        self.check(space, &obs)?;
        self.rows.push(Row { obs, provenance });
        Ok(())
    }

    /// Index of a stored design within [`DUPLICATE_TOL`] of `u`.
    pub fn position_near(&self, space: &ParameterSpace, u: &[f64]) -> Option<usize> {
        self.rows.iter().position(|r| {
            space
                .to_unit(&r.obs.x)
                .map(|ru| ru.distance(u) < DUPLICATE_TOL)
                .unwrap_or(false)
        })
    }

    /// Unit-cube inputs, objective values and constraint values as columns.
    pub fn training_columns(&self, space: &ParameterSpace) -> Result<(Vec<UnitPoint>, Vec<f64>, Vec<f64>)> {
        let mut xs = Vec::with_capacity(self.len());
        let mut ks = Vec::with_capacity(self.len());
        let mut vs = Vec::with_capacity(self.len());
        for r in &self.rows {
            xs.push(space.to_unit(&r.obs.x)?);
            ks.push(r.obs.k);
            vs.push(r.obs.v);
        }
        Ok((xs, ks, vs))
    }
}
