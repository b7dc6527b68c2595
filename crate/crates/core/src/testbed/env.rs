//! Small discrete-action environments with one-hot observations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TestbedError;

fn default_goal_reward() -> f64 {
    1.0
}

fn default_hazard_reward() -> f64 {
    -1.0
}

/// Square-cell grid; reaching the goal or a hazard ends the episode, and so
/// does running out of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    #[serde(default)]
    pub hazards: Vec<[usize; 2]>,
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    #[serde(default = "default_hazard_reward")]
    pub hazard_reward: f64,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            horizon: 40,
            start: [0, 0],
            goal: [4, 4],
            hazards: Vec::new(),
            goal_reward: 1.0,
            hazard_reward: -1.0,
        }
    }
}

/// One reward profile, active for `length` environment steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSegment {
    pub length: u64,
    pub means: Vec<f64>,
}

/// Stateless bandit-like task whose per-action mean rewards shift between
/// segments. Segments cycle once the schedule is exhausted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftingBanditSpec {
    pub horizon: usize,
    #[serde(default)]
    pub noise_std: f64,
    pub segments: Vec<RewardSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Gridworld(GridworldSpec),
    DriftingBanditEnv(DriftingBanditSpec),
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Gridworld(GridworldSpec::default())
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), TestbedError> {
        let bad = |m: String| Err(TestbedError::InvalidEnv(m));
        match self {
            EnvSpec::Gridworld(g) => {
                if g.width == 0 || g.height == 0 {
                    return bad("grid must be at least 1x1".into());
                }
                if g.horizon == 0 {
                    return bad("horizon must be at least 1".into());
                }
                let inside = |p: &[usize; 2]| p[0] < g.width && p[1] < g.height;
                if !inside(&g.start) || !inside(&g.goal) || !g.hazards.iter().all(inside) {
                    return bad("start, goal and hazards must lie inside the grid".into());
                }
                if g.start == g.goal || g.hazards.contains(&g.start) {
                    return bad("start cell must not be terminal".into());
                }
                if !g.goal_reward.is_finite() || !g.hazard_reward.is_finite() {
                    return bad("rewards must be finite".into());
                }
            }
            EnvSpec::DriftingBanditEnv(d) => {
                if d.horizon == 0 {
                    return bad("horizon must be at least 1".into());
                }
                let Some(first) = d.segments.first() else {
                    return bad("at least one reward segment is required".into());
                };
                if first.means.is_empty() {
                    return bad("segments need at least one action".into());
                }
                for s in &d.segments {
                    if s.length == 0 || s.means.len() != first.means.len() {
                        return bad("segments need positive length and equal action counts".into());
                    }
                    if !s.means.iter().all(|m| m.is_finite()) {
                        return bad("rewards must be finite".into());
                    }
                }
                if !d.noise_std.is_finite() || d.noise_std < 0.0 {
                    return bad("noise_std must be finite and non-negative".into());
                }
            }
        }
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        match self {
            EnvSpec::Gridworld(g) => g.width * g.height,
            EnvSpec::DriftingBanditEnv(_) => 1,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            EnvSpec::Gridworld(_) => 4,
            EnvSpec::DriftingBanditEnv(d) => d.segments[0].means.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Observation to act on next; already the reset observation when `done`.
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    position: [usize; 2],
    steps: usize,
    total_steps: u64,
}

impl Env {
    pub fn new(spec: &EnvSpec, seed: u64) -> Result<Self, TestbedError> {
        spec.validate()?;
        let mut env = Self {
            spec: spec.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            position: [0, 0],
            steps: 0,
            total_steps: 0,
        };
        env.reset();
        Ok(env)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.steps = 0;
        if let EnvSpec::Gridworld(g) = &self.spec {
            self.position = g.start;
        }
        self.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        match &self.spec {
            EnvSpec::Gridworld(g) => {
                let mut obs = vec![0.0; g.width * g.height];
                obs[self.position[1] * g.width + self.position[0]] = 1.0;
                obs
            }
            EnvSpec::DriftingBanditEnv(_) => vec![1.0],
        }
    }

    pub fn step(&mut self, action: usize) -> Result<Step, TestbedError> {
        let num_actions = self.spec.num_actions();
        if action >= num_actions {
            return Err(TestbedError::InvalidAction {
                action,
                num_actions,
            });
        }
        self.steps += 1;
        self.total_steps += 1;
        let (reward, terminal, horizon) = match &self.spec {
            EnvSpec::Gridworld(g) => {
                let [x, y] = self.position;
                self.position = match action {
                    0 => [x, y.saturating_sub(1)],
                    1 => [(x + 1).min(g.width - 1), y],
                    2 => [x, (y + 1).min(g.height - 1)],
                    _ => [x.saturating_sub(1), y],
                };
                if self.position == g.goal {
                    (g.goal_reward, true, g.horizon)
                } else if g.hazards.contains(&self.position) {
                    (g.hazard_reward, true, g.horizon)
                } else {
                    (0.0, false, g.horizon)
                }
            }
            EnvSpec::DriftingBanditEnv(d) => {
                let means = active_segment(d, self.total_steps - 1);
                let noise: f64 = StandardNormal.sample(&mut self.rng);
                (means[action] + d.noise_std * noise, false, d.horizon)
            }
        };
        let done = terminal || self.steps >= horizon;
        let observation = if done { self.reset() } else { self.observation() };
        Ok(Step {
            observation,
            reward,
            done,
        })
    }
}

fn active_segment(spec: &DriftingBanditSpec, step: u64) -> &[f64] {
    let cycle: u64 = spec.segments.iter().map(|s| s.length).sum();
    let mut t = step % cycle;
    for s in &spec.segments {
        if t < s.length {
            return &s.means;
        }
        t -= s.length;
    }
    unreachable!("step reduced modulo the cycle length")
}
