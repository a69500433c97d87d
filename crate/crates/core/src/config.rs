//! Planner configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::{FrequencyChoice, ProfileAggregation};
use crate::queuewait::{SimilarityBuckets, DEFAULT_WINDOW_S};

fn default_safety() -> f64 {
    1.5
}

fn default_window() -> i64 {
    DEFAULT_WINDOW_S
}

fn default_affinity() -> String {
    "neg_ttc".to_string()
}

/// Every knob of the planning pipeline. All fields have defaults, so `{}` is
/// a valid configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Multiplier on predicted cycles per resource (1.0 when absent).
    #[serde(default)]
    pub inflation_factors: BTreeMap<String, f64>,
    /// Requested walltime for queue lookups is `tx_base * walltime_safety_factor`.
    #[serde(default = "default_safety")]
    pub walltime_safety_factor: f64,
    #[serde(default)]
    pub buckets: SimilarityBuckets,
    #[serde(default = "default_window")]
    pub window_s: i64,
    #[serde(default = "default_affinity")]
    pub affinity: String,
    #[serde(default)]
    pub frequency_choice: FrequencyChoice,
    #[serde(default)]
    pub profile_aggregation: ProfileAggregation,
    /// Queue wait substituted for a resource with no history in the window.
    #[serde(default)]
    pub tq_priors_s: BTreeMap<String, f64>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            inflation_factors: BTreeMap::new(),
            walltime_safety_factor: default_safety(),
            buckets: SimilarityBuckets::default(),
            window_s: default_window(),
            affinity: default_affinity(),
            frequency_choice: FrequencyChoice::default(),
            profile_aggregation: ProfileAggregation::default(),
            tq_priors_s: BTreeMap::new(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if let Some((id, k)) = self
            .inflation_factors
            .iter()
            .find(|(_, k)| !(k.is_finite() && **k > 0.0))
        {
            return Err(Error::invalid("config", format!("inflation factor for `{id}` must be > 0, got {k}")));
        }
        if !(self.walltime_safety_factor.is_finite() && self.walltime_safety_factor > 0.0) {
            return Err(Error::invalid("config", "walltime_safety_factor must be > 0"));
        }
        if self.window_s <= 0 {
            return Err(Error::invalid("config", "window_s must be > 0"));
        }
        if let Some((id, v)) = self
            .tq_priors_s
            .iter()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::invalid("config", format!("tq prior for `{id}` must be >= 0, got {v}")));
        }
        self.buckets.validate()
    }

    pub fn inflation(&self, resource_id: &str) -> f64 {
        self.inflation_factors.get(resource_id).copied().unwrap_or(1.0)
    }

    pub fn from_json_slice(data: &[u8]) -> Result<Self> {
        let cfg: Config = crate::io::from_json("config", data)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
