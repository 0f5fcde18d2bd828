//! Campaign configuration file (TOML).
//!
//! ```toml
//! seed = 7
//! doe = 10
//!
//! [[space]]
//! name = "d_bottle"
//! lower = 8.0
//! upper = 12.0
//!
//! [acquisition]
//! threshold = 25.0
//! q = 5
//!
//! [budget]
//! raw_samples = 256
//! ```
//!
//! Every table and key is optional; omitted values take their defaults and
//! an omitted `space` is the three-dimensional prechamber box.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::campaign::CampaignSetup;
use crate::error::{Error, Result};
use crate::gp::FitOptions;
use crate::optimize::OptimizerBudget;
use crate::qmc::SamplerKind;
use crate::space::{LhsPlacement, ParameterSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    /// Size of the initial Latin hypercube design.
    pub doe: usize,
    pub lhs: LhsPlacement,
    /// Point set used to seed the acquisition optimizer.
    pub raw_sampler: SamplerKind,
    pub space: ParameterSpace,
    pub acquisition: AcquisitionConfig,
    pub budget: OptimizerBudget,
    pub fit: FitOptions,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            doe: 10,
            lhs: LhsPlacement::Random,
            raw_sampler: SamplerKind::Sobol,
            space: ParameterSpace::prechamber(),
            acquisition: AcquisitionConfig::default(),
            budget: OptimizerBudget::default(),
            fit: FitOptions::default(),
        }
    }
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.doe < 2 {
            return Err(Error::invalid(format!("doe must be at least 2, got {}", self.doe)));
        }
        self.acquisition.validate()?;
        self.budget.validate()
    }

    pub fn setup(&self) -> CampaignSetup {
        CampaignSetup {
            space: self.space.clone(),
            acq: self.acquisition.clone(),
            budget: self.budget.clone(),
            fit: self.fit.clone(),
            doe_n: self.doe,
            lhs: self.lhs,
            raw_sampler: self.raw_sampler,
            seed: self.seed,
        }
    }
}
