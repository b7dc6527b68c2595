use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{apply_in_place, HpOverride, HpTarget, PpoConfig};
use super::env::{Env, EnvSpec};
use super::policy::PolicyValueParams;
use super::ppo::{ppo_update, Optimizer, UpdateStats};
use super::rollout::{collect_rollout, mean_value_estimate, EnvRunner};
use super::{EpisodeOutcome, Testbed, TestbedError};
use crate::bandit::Decision;
use crate::seeding;

/// How long a chosen value stays in effect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideMode {
    /// Only the episode that selected it; the next episode starts from baseline.
    #[default]
    Ephemeral,
    /// Persists until the same cluster is selected again.
    Sticky,
}

/// PPO agent plus its environments, trained one scheduler episode at a time.
#[derive(Debug, Clone)]
pub struct PpoTestbed {
    params: PolicyValueParams,
    optimizer: Optimizer,
    runners: Vec<EnvRunner>,
    baseline: PpoConfig,
    targets: Vec<(String, HpTarget)>,
    mode: OverrideMode,
    sticky: Vec<HpOverride>,
    shuffle_rng: ChaCha8Rng,
    last_return: f64,
    last_update: Option<UpdateStats>,
}

impl PpoTestbed {
    /// `targets` maps each cluster name to the PPO field its values override.
    pub fn new(
        env: &EnvSpec,
        baseline: PpoConfig,
        targets: Vec<(String, HpTarget)>,
        mode: OverrideMode,
        seed: u64,
    ) -> Result<Self, TestbedError> {
        baseline.validate()?;
        env.validate()?;
        let mut init = seeding::stream(seed, seeding::NETWORK_INIT);
        let params = PolicyValueParams::new(
            env.observation_dim(),
            env.num_actions(),
            &baseline.hidden_sizes,
            &mut init,
        );
        let runners = (0..baseline.num_envs)
            .map(|k| {
                Env::new(env, seeding::env_seed(seed, k))
                    .map(|e| EnvRunner::new(e, seeding::action_stream(seed, k)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            optimizer: Optimizer::new(baseline.optimizer, params.num_params()),
            params,
            runners,
            baseline,
            targets,
            mode,
            sticky: Vec::new(),
            shuffle_rng: seeding::stream(seed, seeding::MINIBATCH_SHUFFLE),
            last_return: 0.0,
            last_update: None,
        })
    }

    pub fn params(&self) -> &PolicyValueParams {
        &self.params
    }

    pub fn baseline(&self) -> &PpoConfig {
        &self.baseline
    }

    pub fn last_update(&self) -> Option<&UpdateStats> {
        self.last_update.as_ref()
    }

    fn override_for(&self, d: &Decision) -> Result<HpOverride, TestbedError> {
        let target = self
            .targets
            .iter()
            .find(|(name, _)| *name == d.cluster_name)
            .map(|(_, t)| *t)
            .ok_or_else(|| TestbedError::UnmappedCluster(d.cluster_name.clone()))?;
        Ok(HpOverride {
            target,
            value: d.hp_value,
        })
    }

    /// The config this episode trains with.
    pub fn effective_config(&self, decision: Option<&Decision>) -> Result<PpoConfig, TestbedError> {
        let mut cfg = self.baseline.clone();
        let current = decision.map(|d| self.override_for(d)).transpose()?;
        if self.mode == OverrideMode::Sticky {
            for o in &self.sticky {
                if current.is_none_or(|c| c.target != o.target) {
                    apply_in_place(&mut cfg, o)?;
                }
            }
        }
        if let Some(o) = current {
            apply_in_place(&mut cfg, &o)?;
        }
        Ok(cfg)
    }
}

impl Testbed for PpoTestbed {
    fn run_episode(&mut self, decision: Option<&Decision>) -> Result<EpisodeOutcome, TestbedError> {
        let cfg = self.effective_config(decision)?;
        let mut buffers = Vec::with_capacity(self.runners.len());
        for runner in &mut self.runners {
            let mut buf = collect_rollout(&self.params, runner, cfg.rollout_length)?;
            buf.compute_advantages(cfg.discount, cfg.gae_lambda)?;
            buffers.push(buf);
        }
        let stats = ppo_update(
            &mut self.params,
            &mut self.optimizer,
            &buffers,
            &cfg,
            &mut self.shuffle_rng,
        )?;
        self.last_update = Some(stats);

        let states: Vec<&[f64]> = buffers
            .iter()
            .flat_map(|b| b.transitions.iter().map(|t| t.state.as_slice()))
            .collect();
        let v_bar = mean_value_estimate(&self.params, &states)?;

        let returns: Vec<f64> = buffers.iter().flat_map(|b| b.episode_returns.iter().copied()).collect();
        let return_carried = returns.is_empty();
        if !return_carried {
            self.last_return = returns.iter().sum::<f64>() / returns.len() as f64;
        }

        if let (OverrideMode::Sticky, Some(d)) = (self.mode, decision) {
            let o = self.override_for(d)?;
            self.sticky.retain(|s| s.target != o.target);
            self.sticky.push(o);
        }
        Ok(EpisodeOutcome {
            v_bar,
            mean_episode_return: self.last_return,
            return_carried,
        })
    }
}
