//! Desk-scale RL stack used to exercise the scheduler end to end.
//!
//! Gridworld and drifting-reward environments, rollout collection, GAE and a
//! small PPO whose gradients are derived by hand. [`PpoTestbed`] wires them into
//! the per-episode loop and reports the post-update mean value estimate that
//! the scheduler consumes as its utility sample.

pub mod config;
pub mod env;
pub mod gae;
pub mod mlp;
pub mod policy;
pub mod ppo;
pub mod rollout;
mod trainer;

use thiserror::Error;

use crate::bandit::Decision;

pub use config::{apply_hp_override, HpOverride, HpTarget, OptimizerKind, PpoConfig};
pub use env::{Env, EnvSpec, GridworldSpec};
pub use gae::gae;
pub use policy::PolicyValueParams;
pub use rollout::{collect_rollout, mean_value_estimate, RolloutBuffer, Transition};
pub use trainer::{OverrideMode, PpoTestbed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TestbedError {
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("action {action} out of range for {num_actions} actions")]
    InvalidAction { action: usize, num_actions: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("length mismatch: {rewards} rewards, {values} values, {dones} dones")]
    LengthMismatch {
        rewards: usize,
        values: usize,
        dones: usize,
    },
    #[error("{0}")]
    EmptyInput(&'static str),
    #[error("advantages have not been computed for this buffer")]
    MissingAdvantages,
    #[error("unknown hyperparameter target '{0}'")]
    UnknownTarget(String),
    #[error("invalid override {value} for {target:?}: {reason}")]
    InvalidOverride {
        target: HpTarget,
        value: f64,
        reason: &'static str,
    },
    #[error("no hyperparameter target for cluster '{0}'")]
    UnmappedCluster(String),
    #[error("{0}")]
    Other(String),
}

/// What one training episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    /// Utility sample for the scheduler.
    pub v_bar: f64,
    pub mean_episode_return: f64,
    /// No episode finished in this rollout; `mean_episode_return` is carried over.
    pub return_carried: bool,
}

/// Anything that can train for one scheduler episode under a chosen arm.
///
/// `None` means "no override": train with the baseline configuration.
pub trait Testbed {
    fn run_episode(&mut self, decision: Option<&Decision>) -> Result<EpisodeOutcome, TestbedError>;
}
