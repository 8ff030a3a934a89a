use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelId, DataError, RawDataset};
use crate::time::{DatePeriod, Frequency};

pub const DEFAULT_CONFIDENCE: f64 = 0.68;

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}

/// A facility characteristic assumed constant over the project (floor area,
/// number of production lines, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticFactor {
    pub name: String,
    pub value: String,
}

/// Project parameters fixed before any data is touched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub ecm_description: String,
    pub boundary_description: String,
    pub baseline_period: DatePeriod,
    pub implementation_period: DatePeriod,
    pub reporting_period: DatePeriod,
    pub dependent_channel_id: ChannelId,
    #[serde(default)]
    pub static_factors: Vec<StaticFactor>,
    #[serde(default = "default_confidence")]
    pub confidence_level: f64,
    #[serde(default = "Frequency::all")]
    pub frequencies: Vec<Frequency>,
}

impl ProjectConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let mut cfg: ProjectConfig =
            toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))?;
        cfg.frequencies.sort();
        cfg.frequencies.dedup();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    /// Check the invariants that do not depend on data.
    pub fn validate(&self) -> Result<(), DataError> {
        for (name, p) in [
            ("baseline", &self.baseline_period),
            ("implementation", &self.implementation_period),
            ("reporting", &self.reporting_period),
        ] {
            if !p.is_valid() {
                return Err(DataError::Config(format!("{name} period ends before it starts")));
            }
        }
        if !self.baseline_period.precedes(&self.implementation_period)
            || !self.implementation_period.precedes(&self.reporting_period)
        {
            return Err(DataError::Config(
                "periods must be ordered baseline < implementation < reporting without overlap".into(),
            ));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(DataError::Config(format!(
                "confidence level {} is outside (0, 1)",
                self.confidence_level
            )));
        }
        if self.frequencies.is_empty() {
            return Err(DataError::Config("at least one measurement frequency is required".into()));
        }
        Ok(())
    }

    /// Check the invariants that tie the config to an ingested dataset.
    pub fn validate_against(&self, dataset: &RawDataset) -> Result<(), DataError> {
        if dataset.channel(&self.dependent_channel_id).is_none() {
            return Err(DataError::UnknownChannel(self.dependent_channel_id.clone()));
        }
        let finest = self.frequencies.iter().min().expect("validated non-empty");
        if dataset.native_frequency > finest.duration() {
            return Err(DataError::Config(format!(
                "data is sampled every {} s, coarser than the requested {} frequency",
                dataset.native_frequency.num_seconds(),
                finest
            )));
        }
        Ok(())
    }
}
