//! Experiment configuration, loaded from a single TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::train::TrainConfig;
use crate::util::sha256_hex;
use crate::worldgen::{PolicyParams, WorldgenParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Dataset shape: how many environments and episodes to generate and
/// how they are split.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_envs: usize,
    pub n_val_unseen_envs: usize,
    pub n_test_envs: usize,
    /// episodes per training environment; a fraction of the start
    /// locations is held out as the val-seen split
    pub episodes_per_train_env: usize,
    pub episodes_per_eval_env: usize,
    pub val_seen_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_envs: 72,
            n_val_unseen_envs: 8,
            n_test_envs: 0,
            episodes_per_train_env: 8,
            episodes_per_eval_env: 12,
            val_seen_fraction: 0.125,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_envs < 4 {
            return Err(ConfigError::Invalid("need at least 4 environments".into()));
        }
        if self.n_val_unseen_envs == 0 {
            return Err(ConfigError::Invalid("need at least one val-unseen environment".into()));
        }
        if self.n_val_unseen_envs + self.n_test_envs >= self.n_envs {
            return Err(ConfigError::Invalid("no environments left for training".into()));
        }
        if self.episodes_per_train_env == 0 || self.episodes_per_eval_env == 0 {
            return Err(ConfigError::Invalid("episode counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_seen_fraction) {
            return Err(ConfigError::Invalid("val_seen_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// The full experiment description. Every command reads the same file
/// so that one hash pins an entire run.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub worldgen: WorldgenParams,
    pub policy: PolicyParams,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.worldgen.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.dataset.validate()?;
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Hash of the canonical serialized form; stamped into artifacts.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(json.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_roundtrips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let toml_text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&toml_text).unwrap();
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: ExperimentConfig =
            toml::from_str("seed = 9\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("banana = 1\n").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[model]\nwidth = 3\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        b.seed = 1234;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_sections_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.n_val_unseen_envs = 0;
        assert!(cfg.validate().is_err());
    }
}
