//! Decision-log CSV and its JSON sidecar.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Method};
use crate::bandit::{ConfidenceRecord, HpCluster, SchedulerConfig};
use crate::numfmt::fmt_g;

pub const DECISION_HEADER: [&str; 14] = [
    "episode",
    "method",
    "cluster",
    "hp_name",
    "hp_value",
    "v_bar",
    "mean_episode_return",
    "cluster_U",
    "cluster_N",
    "hp_U",
    "hp_N",
    "cluster_bonus",
    "hp_bonus",
    "return_carried",
];

/// Cluster / hp labels used on rows produced without an override.
pub const BASELINE_CLUSTER: &str = "none";
pub const BASELINE_HP: &str = "baseline";

/// One completed episode. Arm statistics are the values at selection time,
/// so `cluster_U + cluster_bonus` is the score that won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLogRow {
    pub episode: u64,
    pub method: Method,
    pub cluster: String,
    pub hp_name: String,
    pub hp_value: f64,
    pub v_bar: f64,
    pub mean_episode_return: f64,
    pub cluster_u: f64,
    pub cluster_n: u64,
    pub hp_u: f64,
    pub hp_n: u64,
    pub cluster_bonus: f64,
    pub hp_bonus: f64,
    pub return_carried: bool,
}

impl DecisionLogRow {
    pub fn csv_fields(&self) -> [String; 14] {
        [
            self.episode.to_string(),
            self.method.as_str().to_string(),
            self.cluster.clone(),
            self.hp_name.clone(),
            fmt_g(self.hp_value),
            fmt_g(self.v_bar),
            fmt_g(self.mean_episode_return),
            fmt_g(self.cluster_u),
            self.cluster_n.to_string(),
            fmt_g(self.hp_u),
            self.hp_n.to_string(),
            fmt_g(self.cluster_bonus),
            fmt_g(self.hp_bonus),
            u8::from(self.return_carried).to_string(),
        ]
    }
}

pub fn write_decision_log(path: &Path, rows: &[DecisionLogRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(DECISION_HEADER)
        .and_then(|_| rows.iter().try_for_each(|r| w.write_record(r.csv_fields())))
        .map_err(|e| HarnessError::csv(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_confidence_log(path: &Path, records: &[ConfidenceRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(ConfidenceRecord::CSV_HEADER)
        .and_then(|_| records.iter().try_for_each(|r| w.write_record(r.csv_row())))
        .map_err(|e| HarnessError::csv(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

/// Everything replay needs beyond the CSV itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub method: Method,
    pub seed: u64,
    pub scheduler: SchedulerConfig,
    /// The clusters this run scheduled over (a singleton for restricted phases).
    pub clusters: Vec<HpCluster>,
    pub total_episodes: usize,
}

/// `decisions.csv` → `decisions.meta.json`.
pub fn meta_path_for(log: &Path) -> PathBuf {
    log.with_extension("meta.json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| HarnessError::Json(e.to_string()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Json(format!("{}: {e}", path.display())))
}
