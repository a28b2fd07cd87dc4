//! One JSON configuration binding every pipeline stage.
//!
//! Unknown keys are rejected and every module invariant is checked at load
//! time, so a bad config fails before any work starts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::ScoreMode;
use crate::predict::TrainConfig;
use crate::safety::FilterParams;
use crate::sim::{PedestrianParams, WorldConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Predictor section: feature pipeline plus training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// History window length (states per feature vector).
    pub feature_window: usize,
    pub learning_rate: f64,
    pub epochs: u32,
    pub lr_decay_every: u32,
    pub lr_decay_factor: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            feature_window: 5,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            lr_decay_every: t.lr_decay_every,
            lr_decay_factor: t.lr_decay_factor,
            batch_size: t.batch_size,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
        }
    }
}

impl PredictorConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            lr_decay_every: self.lr_decay_every,
            lr_decay_factor: self.lr_decay_factor,
            batch_size: self.batch_size,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalConfig {
    pub alpha: f64,
    pub score_mode: ScoreMode,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            score_mode: ScoreMode::PerStep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_trials: u64,
    pub alphas: Vec<f64>,
    pub include_vanilla: bool,
    pub include_random: bool,
    /// Step-sample targets for dataset generation.
    pub n_train_samples: u64,
    pub n_cal_samples: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_trials: 10_000,
            alphas: vec![0.15, 0.25, 0.5],
            include_vanilla: true,
            include_random: true,
            n_train_samples: 1_000_000,
            n_cal_samples: 100_000,
        }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub output_dir: Option<String>,
    pub world: WorldConfig,
    pub pedestrian: PedestrianParams,
    pub predictor: PredictorConfig,
    pub conformal: ConformalConfig,
    pub filter: FilterParams,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: String| ConfigError::Invalid(m);
        self.world.validate().map_err(|e| inv(e.to_string()))?;
        self.pedestrian.validate().map_err(|e| inv(e.to_string()))?;
        self.filter.validate().map_err(|e| inv(e.to_string()))?;
        self.predictor
            .train_config(self.master_seed)
            .validate()
            .map_err(|e| inv(e.to_string()))?;
        if self.predictor.feature_window == 0 {
            return Err(inv("predictor.feature_window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.conformal.alpha) {
            return Err(inv(format!(
                "conformal.alpha must be in [0, 1], got {}",
                self.conformal.alpha
            )));
        }
        for a in &self.experiment.alphas {
            if !(0.0..=1.0).contains(a) {
                return Err(inv(format!(
                    "experiment.alphas entries must be in [0, 1], got {a}"
                )));
            }
        }
        if self.filter.u_min < self.world.speed_min || self.filter.u_max > self.world.speed_max {
            return Err(inv(format!(
                "filter control box [{}, {}] must lie within the world speed range [{}, {}]",
                self.filter.u_min, self.filter.u_max, self.world.speed_min, self.world.speed_max
            )));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let s = cfg.to_json_pretty();
        let back = RunConfig::from_json_str(&s).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let s = r#"{"world": {"road_lenght": 84.0}}"#;
        match RunConfig::from_json_str(s) {
            Err(ConfigError::Parse(e)) => assert!(e.to_string().contains("road_lenght"), "{e}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invariants_checked_at_load() {
        let s = r#"{"world": {"dt": 0.0}}"#;
        assert!(matches!(
            RunConfig::from_json_str(s),
            Err(ConfigError::Invalid(_))
        ));
        let s = r#"{"conformal": {"alpha": 1.5}}"#;
        assert!(matches!(
            RunConfig::from_json_str(s),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn partial_overrides_keep_defaults() {
        let s = r#"{"experiment": {"n_trials": 100}}"#;
        let cfg = RunConfig::from_json_str(s).unwrap();
        assert_eq!(cfg.experiment.n_trials, 100);
        assert_eq!(cfg.experiment.alphas, vec![0.15, 0.25, 0.5]);
        assert_eq!(cfg.world.road_length, 84.0);
    }
}
