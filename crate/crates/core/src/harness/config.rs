use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Method};
use crate::bandit::{HpCluster, Scheduler, SchedulerConfig};
use crate::testbed::{apply_hp_override, EnvSpec, HpOverride, HpTarget, OverrideMode, PpoConfig};

/// A cluster declaration; `target` defaults to the PPO field named by the
/// cluster (`LR`, `BS`, `VLC`, `ELC`, `NUE` or the long field names).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDecl {
    #[serde(flatten)]
    pub cluster: HpCluster,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<HpTarget>,
}

impl ClusterDecl {
    pub fn new(cluster: HpCluster) -> Self {
        Self {
            cluster,
            target: None,
        }
    }

    pub fn resolve_target(&self) -> Result<HpTarget, HarnessError> {
        match self.target {
            Some(t) => Ok(t),
            None => HpTarget::parse(&self.cluster.name).map_err(|_| {
                HarnessError::Config(format!(
                    "cluster '{}' does not name a PPO field; set \"target\"",
                    self.cluster.name
                ))
            }),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub method: Method,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub clusters: Vec<ClusterDecl>,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub env: EnvSpec,
    pub total_episodes: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub override_mode: OverrideMode,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn hp_clusters(&self) -> Vec<HpCluster> {
        self.clusters.iter().map(|d| d.cluster.clone()).collect()
    }

    pub fn targets(&self) -> Result<Vec<(String, HpTarget)>, HarnessError> {
        self.clusters
            .iter()
            .map(|d| Ok((d.cluster.name.clone(), d.resolve_target()?)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return err("at least one seed is required".into());
        }
        if self.total_episodes == 0 {
            return err("total_episodes must be at least 1".into());
        }
        self.ppo
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.env
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.method == Method::Fixed {
            return Ok(());
        }
        Scheduler::new(self.hp_clusters(), self.scheduler)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.method == Method::Relay && self.clusters.len() < 2 {
            return err("relay needs at least two clusters".into());
        }
        // Every declared value has to produce a valid config on its own.
        for decl in &self.clusters {
            let target = decl.resolve_target()?;
            for m in &decl.cluster.members {
                let o = HpOverride {
                    target,
                    value: m.value,
                };
                apply_hp_override(&self.ppo, Some(&o)).map_err(|e| {
                    HarnessError::Config(format!("cluster '{}' value '{}': {e}", decl.cluster.name, m.name))
                })?;
            }
        }
        Ok(())
    }
}
