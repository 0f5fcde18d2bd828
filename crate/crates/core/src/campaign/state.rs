use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{FitOptions, GpHyperparameters, Standardization};
use crate::optimize::OptimizerBudget;
use crate::qmc::SamplerKind;
use crate::space::{LhsPlacement, ParameterSpace, UnitPoint};

pub const STATE_VERSION: u32 = 1;
pub const STATE_FILE: &str = "state.json";

/// What a pending batch will complete once its results are ingested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "iteration")]
pub enum Stage {
    Doe,
    Iteration(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingPoint {
    pub id: String,
    /// Physical coordinates exactly as written to the proposals file.
    pub x: Vec<f64>,
    pub unit: UnitPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingBatch {
    pub stage: Stage,
    pub file: String,
    pub points: Vec<PendingPoint>,
}

impl PendingBatch {
    pub fn ids(&self) -> Vec<String> {
        self.points.iter().map(|p| p.id.clone()).collect()
    }
}

/// Hyperparameters and output scaling of one fitted channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedChannel {
    pub hyper: GpHyperparameters,
    pub standardization: Standardization,
}

/// Diagnostics of one proposal step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: u32,
    pub acquisition_value: f64,
    pub raw_best: f64,
    /// No feasible incumbent: the batch maximized feasibility only.
    pub feasibility_fallback: bool,
    /// Proposals that collided with existing designs and were resampled.
    pub resampled: usize,
}

/// Full persisted loop state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub version: u32,
    pub space: ParameterSpace,
    pub acq: AcquisitionConfig,
    pub budget: OptimizerBudget,
    pub fit: FitOptions,
    pub doe_n: usize,
    pub lhs: LhsPlacement,
    pub raw_sampler: SamplerKind,
    pub rng_seed: u64,
    pub iteration: u32,
    pub dataset: Dataset,
    pub pending: Option<PendingBatch>,
    pub fitted_k: Option<FittedChannel>,
    pub fitted_v: Option<FittedChannel>,
    pub kernel_nu: f64,
    pub log: Vec<StepRecord>,
}

impl CampaignState {
    /// Checks the structural invariants of a loaded or freshly built state.
    pub fn validate(&self) -> Result<()> {
        self.acq.validate()?;
        self.budget.validate()?;
        if self.doe_n < 2 {
            return Err(Error::invalid("campaign needs doe_n >= 2"));
        }
        if self.pending.is_none() && !self.dataset.is_empty() {
            let expected = self.doe_n + self.acq.q * self.iteration as usize;
            if self.dataset.len() != expected {
                return Err(Error::InvalidState(format!(
                    "dataset has {} rows, expected {expected} after {} iterations",
                    self.dataset.len(),
                    self.iteration
                )));
            }
        }
        Ok(())
    }
}

/// Writes the state as JSON via a temporary file and an atomic rename.
pub fn save_state(state: &CampaignState, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(state).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_state(path: &Path) -> Result<CampaignState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |e: serde_json::Error| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            message: "missing or non-integer `version` field".into(),
        })?;
    if version != STATE_VERSION as u64 {
        return Err(Error::UnsupportedVersion {
            found: version.min(u32::MAX as u64) as u32,
            expected: STATE_VERSION,
        });
    }
    let state: CampaignState = serde_json::from_value(value).map_err(parse_err)?;
    state.validate()?;
    Ok(state)
}
