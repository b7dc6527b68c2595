use serde::{Deserialize, Serialize};

use super::TestbedError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain SGD; per-episode learning-rate overrides act directly on the step.
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub value_loss_coefficient: f64,
    pub entropy_loss_coefficient: f64,
    pub update_epochs: usize,
    pub clip_range: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub rollout_length: usize,
    pub num_envs: usize,
    pub max_grad_norm: Option<f64>,
    pub normalize_advantages: bool,
    pub optimizer: OptimizerKind,
    pub hidden_sizes: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        // Learning rate, GAE, entropy/value coefficients and clipping follow the
        // common PPO defaults; sizes are scaled down for the small testbeds.
        Self {
            learning_rate: 5e-4,
            batch_size: 64,
            value_loss_coefficient: 0.5,
            entropy_loss_coefficient: 0.01,
            update_epochs: 3,
            clip_range: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            rollout_length: 32,
            num_envs: 4,
            max_grad_norm: Some(0.5),
            normalize_advantages: true,
            optimizer: OptimizerKind::Sgd,
            hidden_sizes: vec![32],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TestbedError> {
        let bad = |m: &str| Err(TestbedError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return bad("clip_range must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.discount) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("discount and gae_lambda must lie in [0, 1]");
        }
        if self.rollout_length == 0 || self.num_envs == 0 {
            return bad("rollout_length and num_envs must be at least 1");
        }
        if self.batch_size == 0 || self.batch_size > self.rollout_length * self.num_envs {
            return bad("batch_size must be in 1..=rollout_length*num_envs");
        }
        if self.update_epochs == 0 {
            return bad("update_epochs must be at least 1");
        }
        if !self.value_loss_coefficient.is_finite() || !self.entropy_loss_coefficient.is_finite() {
            return bad("loss coefficients must be finite");
        }
        if let Some(n) = self.max_grad_norm {
            if !(n.is_finite() && n > 0.0) {
                return bad("max_grad_norm must be positive");
            }
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        Ok(())
    }

    pub fn samples_per_update(&self) -> usize {
        self.rollout_length * self.num_envs
    }
}

/// The PPO field a hyperparameter cluster controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HpTarget {
    LearningRate,
    BatchSize,
    ValueLossCoefficient,
    EntropyLossCoefficient,
    UpdateEpochs,
}

impl HpTarget {
    /// Accepts the short cluster names (`LR`, `BS`, `VLC`, `ELC`, `NUE`) and the
    /// long field names, case-insensitively.
    pub fn parse(name: &str) -> Result<Self, TestbedError> {
        match name.to_ascii_lowercase().as_str() {
            "lr" | "learning_rate" => Ok(Self::LearningRate),
            "bs" | "batch_size" => Ok(Self::BatchSize),
            "vlc" | "value_loss_coefficient" => Ok(Self::ValueLossCoefficient),
            "elc" | "entropy_loss_coefficient" => Ok(Self::EntropyLossCoefficient),
            "nue" | "update_epochs" => Ok(Self::UpdateEpochs),
            _ => Err(TestbedError::UnknownTarget(name.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpOverride {
    pub target: HpTarget,
    pub value: f64,
}

fn as_count(target: HpTarget, value: f64) -> Result<usize, TestbedError> {
    if value.fract() != 0.0 || value < 1.0 || !value.is_finite() {
        return Err(TestbedError::InvalidOverride {
            target,
            value,
            reason: "expected a positive integer",
        });
    }
    Ok(value as usize)
}

/// Baseline config with exactly one field replaced.
pub fn apply_hp_override(
    baseline: &PpoConfig,
    hp: Option<&HpOverride>,
) -> Result<PpoConfig, TestbedError> {
    let mut cfg = baseline.clone();
    if let Some(o) = hp {
        apply_in_place(&mut cfg, o)?;
    }
    Ok(cfg)
}

pub(crate) fn apply_in_place(cfg: &mut PpoConfig, o: &HpOverride) -> Result<(), TestbedError> {
    if !o.value.is_finite() {
        return Err(TestbedError::InvalidOverride {
            target: o.target,
            value: o.value,
            reason: "value must be finite",
        });
    }
    match o.target {
        HpTarget::LearningRate => cfg.learning_rate = o.value,
        HpTarget::BatchSize => cfg.batch_size = as_count(o.target, o.value)?,
        HpTarget::ValueLossCoefficient => cfg.value_loss_coefficient = o.value,
        HpTarget::EntropyLossCoefficient => cfg.entropy_loss_coefficient = o.value,
        HpTarget::UpdateEpochs => cfg.update_epochs = as_count(o.target, o.value)?,
    }
    cfg.validate()
}
