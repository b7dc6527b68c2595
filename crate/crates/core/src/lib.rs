//! Single-run hyperparameter scheduling for reinforcement learning.
//!
//! Hyperparameters are grouped into clusters (learning rate, batch size, ...)
//! and scheduled per training episode by a two-level UCB bandit whose rewards
//! are sliding-window means of the value network's average prediction.
//!
//! - [`bandit`]: the clustered-arm scheduler.
//! - [`relay`]: the two-phase COI/NOI refinement built on top of it.
//! - [`testbed`]: small environments plus a hand-differentiated PPO.
//! - [`harness`]: experiment configs, runs, sweeps, CSV logs and replay.
//! - [`service`]: newline-delimited JSON ask/tell server.

pub mod bandit;
pub mod harness;
pub mod numfmt;
pub mod relay;
pub mod seeding;
pub mod service;
pub mod testbed;

pub use bandit::{
    ArmRef, ArmStats, BanditError, ConfidenceRecord, Decision, HpCluster, HpValue, Scheduler,
    SchedulerConfig, Snapshot,
};
