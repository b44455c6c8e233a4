//! JSON run configuration.
//!
//! Every section except `scenario` may be omitted; omitted sections take
//! their defaults. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimator::FilterConfig;
use crate::perturbation::DriftConfig;
use crate::sim::{ScenarioConfig, TaskSetup};
use crate::tasklogic::{AscConfig, CriteriaConfig, RewardConfig, TaskGeometry};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_owned(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    /// Used in training mode only.
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub criteria: CriteriaConfig,
    #[serde(default)]
    pub asc: AscConfig,
    /// Enables reward and terminal evaluation.
    #[serde(default)]
    pub task: Option<TaskGeometry>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.to_string();
            // Name the missing key itself, not its parent.
            let key = match msg.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
                Some(field) if path == "." => field.to_owned(),
                Some(field) => format!("{path}.{field}"),
                None => path,
            };
            invalid(&key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.filter.validate().map_err(|e| invalid("filter", e))?;
        self.reward.validate().map_err(|e| invalid("reward", e))?;
        self.criteria.validate().map_err(|e| invalid("criteria", e))?;
        self.asc.validate().map_err(|e| invalid("asc", e))?;
        if let Some(t) = &self.task {
            t.validate().map_err(|e| invalid("task", e))?;
        }
        if !(self.drift.sigma_drift >= 0.0) {
            return Err(invalid("drift.sigma_drift", "must be non-negative"));
        }
        if self.drift.d_max.is_some_and(|d| !(d >= 0.0)) {
            return Err(invalid("drift.d_max", "must be non-negative"));
        }
        let dt = 1.0 / self.scenario.control_rate;
        self.scenario
            .validate(self.filter.history_horizon(dt))
            .map_err(|e| match e {
                crate::sim::SimError::InvalidConfig { key, reason } => invalid(&key, reason),
                other => invalid("scenario", other),
            })
    }

    pub fn task_setup(&self) -> Option<TaskSetup> {
        self.task.as_ref().map(|geometry| TaskSetup {
            geometry: geometry.clone(),
            criteria: self.criteria.clone(),
            reward: self.reward.clone(),
        })
    }

    /// Canonical re-serialization: fixed field order, defaults filled in.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "scenario": {
            "duration": 1.0,
            "object": {"shape": {"kind": "sphere", "radius": 0.1}, "position": [0, 0, 1]}
        }
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.filter, FilterConfig::default());
        assert_eq!(c.scenario.obs_rate, 5.0);
        assert_eq!(c.scenario.obs_latency, 0.2);
        assert_eq!(c.scenario.surface_samples, 2048);
        assert!(c.task.is_none());
    }

    #[test]
    fn missing_duration_names_full_key() {
        let text = r#"{"scenario": {"object": {"shape": {"kind": "sphere", "radius": 0.1}, "position": [0,0,1]}}}"#;
        let err = RunConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("scenario.duration"), "{err}");
        let err = RunConfig::parse("{}").unwrap_err();
        assert!(err.to_string().contains("`scenario`"), "{err}");
    }

    #[test]
    fn unknown_and_invalid_keys_are_named() {
        let text = MINIMAL.replace("\"duration\"", "\"durration\": 1, \"duration\"");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("scenario"));
        let text = MINIMAL.replacen('{', r#"{"filter": {"q_pos": -1},"#, 1);
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("filter"));
        let text = MINIMAL.replace("\"duration\": 1.0", "\"duration\": 1.0, \"obs_latency\": 0.9");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("scenario.obs_latency"));
    }

    #[test]
    fn canonical_round_trip_and_hash() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let again = RunConfig::parse(&c.canonical_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.canonical_json(), c.canonical_json());
        assert_eq!(c.hash(), again.hash());
        assert_eq!(c.hash().len(), 64);
        let reformatted = MINIMAL.replace('\n', " ");
        assert_eq!(RunConfig::parse(&reformatted).unwrap().hash(), c.hash());
    }
}
