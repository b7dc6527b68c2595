//! Hierarchical UCB scheduling over clustered hyperparameter arms.
//!
//! A [`Scheduler`] holds one [`ArmStats`] per cluster and one per member value.
//! Each episode is a strict `select` / `record` pair: `select` picks the cluster
//! with the highest `U + c * sqrt(ln i / N)`, then the member of that cluster with
//! the highest score of the same form; `record` pushes the episode's utility
//! sample into both windows and bumps both counts.
//!
//! Ties at either level go to the first arm in declaration order.

mod snapshot;
mod window;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use snapshot::{ArmStatsSnapshot, ClusterSnapshot, HpSnapshot, Snapshot};
pub use window::ArmStats;

use crate::numfmt::fmt_g;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BanditError {
    #[error("empty cluster set")]
    EmptyClusterSet,
    #[error("empty cluster '{0}'")]
    EmptyCluster(String),
    #[error("duplicate cluster '{0}'")]
    DuplicateCluster(String),
    #[error("duplicate hp '{hp}' in cluster '{cluster}'")]
    DuplicateHp { cluster: String, hp: String },
    #[error("non-finite value for hp '{hp}' in cluster '{cluster}'")]
    NonFiniteHpValue { cluster: String, hp: String },
    #[error("invalid scheduler config: {0}")]
    InvalidConfig(String),
    #[error("pending_tell")]
    PendingTell,
    #[error("no_pending_ask")]
    NoPendingAsk,
    #[error("non-finite v_bar")]
    NonFiniteUtility,
    #[error("unknown arm '{0}'")]
    UnknownArm(String),
    #[error("no completed episodes")]
    NoCompletedEpisodes,
}

pub type Result<T, E = BanditError> = std::result::Result<T, E>;

/// One concrete hyperparameter value inside a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpValue {
    pub name: String,
    pub value: f64,
}

impl HpValue {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }

    /// Names the value after its `%.12g` rendering, e.g. `0.00025`.
    pub fn from_value(value: f64) -> Self {
        Self::new(fmt_g(value), value)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HpValueRepr {
    Bare(f64),
    Named { name: String, value: f64 },
}

#[derive(Serialize, Deserialize)]
struct HpClusterRepr {
    name: String,
    values: Vec<HpValueRepr>,
}

impl Serialize for HpValueRepr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HpValueRepr::Bare(v) => s.serialize_f64(*v),
            HpValueRepr::Named { name, value } => HpValue::new(name.clone(), *value).serialize(s),
        }
    }
}

/// A named hyperparameter category and its candidate values.
///
/// On the wire a cluster is `{"name": .., "values": [..]}` where each value is
/// either a bare number or `{"name": .., "value": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "HpClusterRepr", into = "HpClusterRepr")]
pub struct HpCluster {
    pub name: String,
    pub members: Vec<HpValue>,
}

impl From<HpClusterRepr> for HpCluster {
    fn from(repr: HpClusterRepr) -> Self {
        let members = repr
            .values
            .into_iter()
            .map(|v| match v {
                HpValueRepr::Bare(value) => HpValue::from_value(value),
                HpValueRepr::Named { name, value } => HpValue::new(name, value),
            })
            .collect();
        Self {
            name: repr.name,
            members,
        }
    }
}

impl From<HpCluster> for HpClusterRepr {
    fn from(c: HpCluster) -> Self {
        Self {
            name: c.name,
            values: c
                .members
                .into_iter()
                .map(|m| HpValueRepr::Named {
                    name: m.name,
                    value: m.value,
                })
                .collect(),
        }
    }
}

impl HpCluster {
    pub fn new(name: impl Into<String>, members: Vec<HpValue>) -> Self {
        Self {
            name: name.into(),
            members,
        }
    }

    /// Builds a cluster whose member names are the rendered values.
    pub fn from_values(name: impl Into<String>, values: &[f64]) -> Self {
        Self::new(name, values.iter().copied().map(HpValue::from_value).collect())
    }

    pub fn member(&self, name: &str) -> Option<&HpValue> {
        self.members.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// The earliest declared arm wins among equal scores.
    #[default]
    FirstInOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    #[serde(rename = "c", alias = "exploration_coefficient")]
    pub exploration_coefficient: f64,
    #[serde(rename = "W", alias = "window_capacity")]
    pub window_capacity: usize,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl SchedulerConfig {
    pub fn new(exploration_coefficient: f64, window_capacity: usize) -> Self {
        Self {
            exploration_coefficient,
            window_capacity,
            tie_break: TieBreak::FirstInOrder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.exploration_coefficient;
        if !c.is_finite() || c < 0.0 {
            return Err(BanditError::InvalidConfig(format!(
                "exploration coefficient must be finite and non-negative, got {c}"
            )));
        }
        if self.window_capacity == 0 {
            return Err(BanditError::InvalidConfig(
                "window capacity must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self::new(1.0, 10)
    }
}

/// Identifies either a whole cluster or one member value of a cluster.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArmRef {
    pub cluster: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hp: Option<String>,
}

impl ArmRef {
    pub fn cluster(name: impl Into<String>) -> Self {
        Self {
            cluster: name.into(),
            hp: None,
        }
    }

    pub fn hp(cluster: impl Into<String>, hp: impl Into<String>) -> Self {
        Self {
            cluster: cluster.into(),
            hp: Some(hp.into()),
        }
    }
}

impl fmt::Display for ArmRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.hp {
            None => write!(f, "{}", self.cluster),
            Some(hp) => write!(f, "{}/{}", self.cluster, hp),
        }
    }
}

/// The (cluster, value) pair chosen for one episode, with the scores that won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub cluster_name: String,
    pub hp_name: String,
    pub hp_value: f64,
    pub episode: u64,
    pub cluster_score: f64,
    pub hp_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord {
    pub episode: u64,
    pub arm: ArmRef,
    pub mean: f64,
    pub bonus: f64,
    pub upper: f64,
}

impl ConfidenceRecord {
    pub const CSV_HEADER: [&'static str; 5] = ["episode", "arm", "mean", "bonus", "upper"];

    fn new(episode: u64, arm: ArmRef, stats: &ArmStats, c: f64) -> Self {
        let mean = stats.utility();
        let bonus = exploration_bonus(c, episode, stats.count());
        Self {
            episode,
            arm,
            mean,
            bonus,
            upper: mean + bonus,
        }
    }

    pub fn csv_row(&self) -> [String; 5] {
        [
            self.episode.to_string(),
            self.arm.to_string(),
            fmt_g(self.mean),
            fmt_g(self.bonus),
            fmt_g(self.upper),
        ]
    }
}

/// `c * sqrt(ln i / N)`.
pub fn exploration_bonus(c: f64, episode: u64, count: u64) -> f64 {
    c * ((episode as f64).ln() / count as f64).sqrt()
}

/// Index and score of the arm maximising `U + c * sqrt(ln i / N)` over
/// `(utility, count)` pairs; the first maximum wins ties.
pub fn ucb_argmax(
    arms: impl IntoIterator<Item = (f64, u64)>,
    episode: u64,
    c: f64,
) -> Option<(usize, f64)> {
    argmax_first(
        arms.into_iter()
            .map(|(u, n)| u + exploration_bonus(c, episode, n)),
    )
}

fn argmax_first(scores: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, score) in scores.into_iter().enumerate() {
        match best {
            Some((_, b)) if score <= b => {}
            _ => best = Some((idx, score)),
        }
    }
    best
}

#[derive(Debug, Clone)]
struct Pending {
    cluster: usize,
    hp: usize,
    decision: Decision,
}

/// Per-level selection fractions over completed episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionProportions {
    pub clusters: Vec<(String, f64)>,
    pub hps: Vec<(ArmRef, f64)>,
}

impl SelectionProportions {
    pub fn cluster(&self, name: &str) -> Option<f64> {
        self.clusters.iter().find(|(n, _)| n == name).map(|(_, f)| *f)
    }
}

/// The two-level bandit state driven by `select` / `record` pairs.
#[derive(Debug, Clone)]
pub struct Scheduler {
    config: SchedulerConfig,
    clusters: Vec<HpCluster>,
    cluster_stats: Vec<ArmStats>,
    hp_stats: Vec<Vec<ArmStats>>,
    episode: u64,
    pending: Option<Pending>,
}

impl Scheduler {
    pub fn new(clusters: Vec<HpCluster>, config: SchedulerConfig) -> Result<Self> {
        config.validate()?;
        validate_clusters(&clusters)?;
        let w = config.window_capacity;
        let cluster_stats = clusters.iter().map(|_| ArmStats::new(w)).collect();
        let hp_stats = clusters
            .iter()
            .map(|c| c.members.iter().map(|_| ArmStats::new(w)).collect())
            .collect();
        Ok(Self {
            config,
            clusters,
            cluster_stats,
            hp_stats,
            episode: 1,
            pending: None,
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn clusters(&self) -> &[HpCluster] {
        &self.clusters
    }

    /// Current episode index `i` (starts at 1).
    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn completed_episodes(&self) -> u64 {
        self.episode - 1
    }

    pub fn pending(&self) -> Option<&Decision> {
        self.pending.as_ref().map(|p| &p.decision)
    }

    pub fn cluster_stats(&self, cluster: &str) -> Option<&ArmStats> {
        self.cluster_index(cluster).map(|ci| &self.cluster_stats[ci])
    }

    pub fn hp_stats(&self, cluster: &str, hp: &str) -> Option<&ArmStats> {
        let (ci, hi) = self.hp_index(cluster, hp)?;
        Some(&self.hp_stats[ci][hi])
    }

    /// Final per-cluster counts `N(ψ)` in declaration order.
    pub fn cluster_counts(&self) -> Vec<(String, u64)> {
        self.clusters
            .iter()
            .zip(&self.cluster_stats)
            .map(|(c, s)| (c.name.clone(), s.count()))
            .collect()
    }

    fn score(&self, stats: &ArmStats) -> f64 {
        let c = self.config.exploration_coefficient;
        stats.utility() + exploration_bonus(c, self.episode, stats.count())
    }

    fn best_of(&self, stats: &[ArmStats]) -> (usize, f64) {
        let c = self.config.exploration_coefficient;
        ucb_argmax(stats.iter().map(|s| (s.utility(), s.count())), self.episode, c)
            .expect("arm sets are non-empty")
    }

    fn cluster_index(&self, name: &str) -> Option<usize> {
        self.clusters.iter().position(|c| c.name == name)
    }

    fn hp_index(&self, cluster: &str, hp: &str) -> Option<(usize, usize)> {
        let ci = self.cluster_index(cluster)?;
        let hi = self.clusters[ci].members.iter().position(|m| m.name == hp)?;
        Some((ci, hi))
    }

    /// Picks the cluster, then the member value, for the current episode.
    ///
    /// Counts are untouched until the matching [`record`](Self::record).
    pub fn select(&mut self) -> Result<Decision> {
        if self.pending.is_some() {
            return Err(BanditError::PendingTell);
        }
        let (ci, cluster_score) = self.best_of(&self.cluster_stats);
        let (hi, hp_score) = self.best_of(&self.hp_stats[ci]);
        Ok(self.set_pending(ci, hi, cluster_score, hp_score))
    }

    /// Marks an externally chosen arm as this episode's decision.
    ///
    /// Used by baselines that pick arms without UCB but still want the same
    /// bookkeeping and logs; the reported scores are the arms' current UCB values.
    pub fn assign(&mut self, cluster: &str, hp: &str) -> Result<Decision> {
        if self.pending.is_some() {
            return Err(BanditError::PendingTell);
        }
        let (ci, hi) = self
            .hp_index(cluster, hp)
            .ok_or_else(|| BanditError::UnknownArm(ArmRef::hp(cluster, hp).to_string()))?;
        let cluster_score = self.score(&self.cluster_stats[ci]);
        let hp_score = self.score(&self.hp_stats[ci][hi]);
        Ok(self.set_pending(ci, hi, cluster_score, hp_score))
    }

    fn set_pending(&mut self, ci: usize, hi: usize, cluster_score: f64, hp_score: f64) -> Decision {
        let cluster = &self.clusters[ci];
        let member = &cluster.members[hi];
        let decision = Decision {
            cluster_name: cluster.name.clone(),
            hp_name: member.name.clone(),
            hp_value: member.value,
            episode: self.episode,
            cluster_score,
            hp_score,
        };
        self.pending = Some(Pending {
            cluster: ci,
            hp: hi,
            decision: decision.clone(),
        });
        decision
    }

    /// Records the utility sample for the pending decision and advances the episode.
    pub fn record(&mut self, v_bar: f64) -> Result<()> {
        let Some(pending) = self.pending.as_ref() else {
            return Err(BanditError::NoPendingAsk);
        };
        if !v_bar.is_finite() {
            return Err(BanditError::NonFiniteUtility);
        }
        let (ci, hi) = (pending.cluster, pending.hp);
        self.cluster_stats[ci].record(v_bar);
        self.hp_stats[ci][hi].record(v_bar);
        self.episode += 1;
        self.pending = None;
        Ok(())
    }

    pub fn confidence_bound(&self, arm: &ArmRef) -> Result<ConfidenceRecord> {
        let unknown = || BanditError::UnknownArm(arm.to_string());
        let stats = match &arm.hp {
            None => self.cluster_stats(&arm.cluster).ok_or_else(unknown)?,
            Some(hp) => self.hp_stats(&arm.cluster, hp).ok_or_else(unknown)?,
        };
        Ok(ConfidenceRecord::new(
            self.episode,
            arm.clone(),
            stats,
            self.config.exploration_coefficient,
        ))
    }

    /// Confidence records for every arm: each cluster followed by its members.
    pub fn confidence_records(&self) -> Vec<ConfidenceRecord> {
        let c = self.config.exploration_coefficient;
        let mut out = Vec::new();
        for (ci, cluster) in self.clusters.iter().enumerate() {
            out.push(ConfidenceRecord::new(
                self.episode,
                ArmRef::cluster(&cluster.name),
                &self.cluster_stats[ci],
                c,
            ));
            for (hi, member) in cluster.members.iter().enumerate() {
                out.push(ConfidenceRecord::new(
                    self.episode,
                    ArmRef::hp(&cluster.name, &member.name),
                    &self.hp_stats[ci][hi],
                    c,
                ));
            }
        }
        out
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::capture(self)
    }

    /// Fraction of completed episodes each arm was selected, per level.
    pub fn selection_proportions(&self) -> Result<SelectionProportions> {
        let completed = self.completed_episodes();
        if completed == 0 {
            return Err(BanditError::NoCompletedEpisodes);
        }
        let total = completed as f64;
        let clusters = self
            .clusters
            .iter()
            .zip(&self.cluster_stats)
            .map(|(c, s)| (c.name.clone(), (s.count() - 1) as f64 / total))
            .collect();
        let mut hps = Vec::new();
        for (cluster, stats) in self.clusters.iter().zip(&self.hp_stats) {
            for (m, s) in cluster.members.iter().zip(stats) {
                hps.push((ArmRef::hp(&cluster.name, &m.name), (s.count() - 1) as f64 / total));
            }
        }
        Ok(SelectionProportions { clusters, hps })
    }
}

fn validate_clusters(clusters: &[HpCluster]) -> Result<()> {
    if clusters.is_empty() {
        return Err(BanditError::EmptyClusterSet);
    }
    for (i, cluster) in clusters.iter().enumerate() {
        if clusters[..i].iter().any(|c| c.name == cluster.name) {
            return Err(BanditError::DuplicateCluster(cluster.name.clone()));
        }
        if cluster.members.is_empty() {
            return Err(BanditError::EmptyCluster(cluster.name.clone()));
        }
        for (j, m) in cluster.members.iter().enumerate() {
            if cluster.members[..j].iter().any(|o| o.name == m.name) {
                return Err(BanditError::DuplicateHp {
                    cluster: cluster.name.clone(),
                    hp: m.name.clone(),
                });
            }
            if !m.value.is_finite() {
                return Err(BanditError::NonFiniteHpValue {
                    cluster: cluster.name.clone(),
                    hp: m.name.clone(),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
