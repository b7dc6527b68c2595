//! Experiment orchestration: configs, runs, sweeps, logs and replay.

mod config;
mod driver;
pub mod log;
mod replay;
mod run;
mod sweep;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ClusterDecl, ExperimentConfig};
pub use driver::{final_performance, random_arm, run_schedule, EpisodeFailure, ScheduleRun, Selection};
pub use log::{DecisionLogRow, LogMeta};
pub use replay::{read_decision_log, replay, replay_rows, Mismatch, ReplayVerdict};
pub use run::{run_experiment, RunReport, SeedReport};
pub use sweep::{run_sweep, SweepCell, SweepReport};

use crate::bandit::BanditError;
use crate::relay::RelayError;
use crate::testbed::TestbedError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Baseline config throughout.
    Fixed,
    /// Uniform draw over all (cluster, value) arms each episode.
    Random,
    Ultho,
    Relay,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fixed => "fixed",
            Method::Random => "random",
            Method::Ultho => "ultho",
            Method::Relay => "relay",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(Method::Fixed),
            "random" => Some(Method::Random),
            "ultho" => Some(Method::Ultho),
            "relay" => Some(Method::Relay),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("json error: {0}")]
    Json(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error(transparent)]
    Relay(#[from] RelayError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        HarnessError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Configuration problems, as opposed to failures while running.
    pub fn is_config_error(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}
