use serde::{Deserialize, Serialize};

use super::{ArmRef, ArmStats, ConfidenceRecord, Decision, Scheduler, SchedulerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStatsSnapshot {
    pub count: u64,
    pub utility: f64,
    pub window: Vec<f64>,
}

impl From<&ArmStats> for ArmStatsSnapshot {
    fn from(s: &ArmStats) -> Self {
        Self {
            count: s.count(),
            utility: s.utility(),
            window: s.window().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpSnapshot {
    pub name: String,
    pub value: f64,
    pub stats: ArmStatsSnapshot,
    pub confidence: ConfidenceRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub name: String,
    pub stats: ArmStatsSnapshot,
    pub confidence: ConfidenceRecord,
    pub members: Vec<HpSnapshot>,
}

/// Immutable value copy of a scheduler. Field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub episode: u64,
    pub completed_episodes: u64,
    pub config: SchedulerConfig,
    pub clusters: Vec<ClusterSnapshot>,
    pub pending: Option<Decision>,
}

impl Snapshot {
    pub(super) fn capture(s: &Scheduler) -> Self {
        let c = s.config.exploration_coefficient;
        let clusters = s
            .clusters
            .iter()
            .enumerate()
            .map(|(ci, cluster)| ClusterSnapshot {
                name: cluster.name.clone(),
                stats: (&s.cluster_stats[ci]).into(),
                confidence: ConfidenceRecord::new(
                    s.episode,
                    ArmRef::cluster(&cluster.name),
                    &s.cluster_stats[ci],
                    c,
                ),
                members: cluster
                    .members
                    .iter()
                    .enumerate()
                    .map(|(hi, m)| HpSnapshot {
                        name: m.name.clone(),
                        value: m.value,
                        stats: (&s.hp_stats[ci][hi]).into(),
                        confidence: ConfidenceRecord::new(
                            s.episode,
                            ArmRef::hp(&cluster.name, &m.name),
                            &s.hp_stats[ci][hi],
                            c,
                        ),
                    })
                    .collect(),
            })
            .collect();
        Self {
            episode: s.episode,
            completed_episodes: s.completed_episodes(),
            config: s.config,
            clusters,
            pending: s.pending().cloned(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn cluster(&self, name: &str) -> Option<&ClusterSnapshot> {
        self.clusters.iter().find(|c| c.name == name)
    }
}
