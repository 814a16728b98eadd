//! Experiment configuration files.
//!
//! One JSON document with four named sections -- `scenario`, `rewards`,
//! `training` -- plus the output directory and seed list. Missing keys fall
//! back to the shipped defaults; unknown keys are errors so typos in
//! experiment sweeps fail loudly instead of silently running the defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{InitialCondition, ScenarioConfig, ScenarioKind};
use crate::fuel::FuelModel;
use crate::idm::IdmParams;
use crate::policy::PolicySpec;
use crate::ppo::{Algorithm, PerturbationConfig, TrainConfig};
use crate::reward::RewardWeights;
use crate::sim::StepConfig;
use crate::{Error, Result};

/// The `scenario` section: track, population, dynamics, and episode shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub track_length: f64,
    pub vehicle_count: usize,
    pub controlled_index: usize,
    pub idm: IdmParams,
    pub step: StepConfig,
    pub horizon: usize,
    pub init: InitialCondition,
    pub warmup_steps: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let base = ScenarioConfig::unstable_ring();
        ScenarioSection {
            kind: base.kind,
            track_length: base.track_length,
            vehicle_count: base.vehicle_count,
            controlled_index: base.controlled_index,
            idm: base.idm,
            step: base.step,
            horizon: base.horizon,
            init: base.init,
            warmup_steps: base.warmup_steps,
        }
    }
}

/// The `rewards` section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardsSection {
    pub weights: RewardWeights,
    pub fuel: FuelModel,
}

/// Perturbation knobs as written in the file. `eta` defaults to half the
/// policy's initial action standard deviation when omitted, keeping phantom
/// actions inside the policy's own uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSection {
    pub delta: f64,
    pub eta: Option<f64>,
}

impl Default for PerturbationSection {
    fn default() -> Self {
        PerturbationSection {
            delta: 0.2,
            eta: None,
        }
    }
}

/// The `training` section: PPO hyperparameters plus the perturbation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub iterations: usize,
    pub steps_per_iteration: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub algorithm: Algorithm,
    pub policy: PolicySpec,
    pub perturbation: PerturbationSection,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        TrainingSection {
            iterations: base.iterations,
            steps_per_iteration: base.steps_per_iteration,
            gamma: base.gamma,
            gae_lambda: base.gae_lambda,
            clip_ratio: base.clip_ratio,
            epochs: base.epochs,
            minibatch_size: base.minibatch_size,
            learning_rate: base.learning_rate,
            algorithm: base.algorithm,
            policy: base.policy,
            perturbation: PerturbationSection::default(),
        }
    }
}

/// A full experiment: scenario, rewards, training, outputs, seeds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub rewards: RewardsSection,
    pub training: TrainingSection,
    pub output_dir: String,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    /// The shipped default experiment: the unstable ring with ten seeds.
    pub fn unstable_ring() -> Self {
        ExperimentConfig {
            output_dir: "out".into(),
            seeds: (0..10).collect(),
            ..ExperimentConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Assembles the runtime scenario from the scenario and rewards sections.
    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            kind: s.kind,
            track_length: s.track_length,
            vehicle_count: s.vehicle_count,
            controlled_index: s.controlled_index,
            idm: s.idm,
            step: s.step,
            weights: self.rewards.weights,
            fuel: self.rewards.fuel,
            horizon: s.horizon,
            init: s.init,
            warmup_steps: s.warmup_steps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            iterations: t.iterations,
            steps_per_iteration: t.steps_per_iteration,
            gamma: t.gamma,
            gae_lambda: t.gae_lambda,
            clip_ratio: t.clip_ratio,
            epochs: t.epochs,
            minibatch_size: t.minibatch_size,
            learning_rate: t.learning_rate,
            algorithm: t.algorithm,
            policy: t.policy.clone(),
        }
    }

    pub fn perturbation_config(&self) -> PerturbationConfig {
        PerturbationConfig {
            delta: self.training.perturbation.delta,
            eta: self
                .training
                .perturbation
                .eta
                .unwrap_or(0.5 * self.training.policy.init_log_std.exp()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario_config().validate()?;
        self.train_config().validate()?;
        self.perturbation_config().validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::unstable_ring().validate().unwrap();
    }

    #[test]
    fn round_trip_preserves_settings() {
        let mut config = ExperimentConfig::unstable_ring();
        config.scenario.track_length = 200.0;
        config.training.iterations = 7;
        config.training.perturbation.eta = Some(0.05);
        config.seeds = vec![3, 4];
        let text = config.to_json();
        let parsed: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(config, parsed);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{ "scenario": { "track_lenght": 100.0 } }"#;
        let err = serde_json::from_str::<ExperimentConfig>(text).unwrap_err();
        assert!(err.to_string().contains("track_lenght"));
    }

    #[test]
    fn missing_sections_use_defaults() {
        let config: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config.scenario.vehicle_count, 14);
        assert_eq!(config.training.iterations, 50);
    }

    #[test]
    fn eta_defaults_to_half_the_initial_policy_std() {
        let config = ExperimentConfig::unstable_ring();
        let pert = config.perturbation_config();
        let expected = 0.5 * config.training.policy.init_log_std.exp();
        assert!((pert.eta - expected).abs() < 1e-12);

        let mut explicit = config.clone();
        explicit.training.perturbation.eta = Some(0.4);
        assert_eq!(explicit.perturbation_config().eta, 0.4);
    }

    #[test]
    fn load_reports_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\n  \"seeds\": [1,\n}").unwrap();
        let err = ExperimentConfig::load(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "got: {msg}");
    }
}
