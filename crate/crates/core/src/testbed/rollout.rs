use rand_chacha::ChaCha8Rng;

use super::env::Env;
use super::gae::gae;
use super::policy::PolicyValueParams;
use super::TestbedError;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
    pub value_pred: f64,
    pub log_prob: f64,
}

/// Fixed-length slice of experience from one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// `V(s_T)` for the state following the last transition.
    pub bootstrap_value: f64,
    /// Undiscounted returns of the episodes that finished inside this rollout.
    pub episode_returns: Vec<f64>,
    estimates: Option<(Vec<f64>, Vec<f64>)>,
}

impl RolloutBuffer {
    pub fn new(transitions: Vec<Transition>, bootstrap_value: f64) -> Self {
        Self {
            transitions,
            bootstrap_value,
            episode_returns: Vec::new(),
            estimates: None,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Runs GAE once and caches `(advantages, targets)`.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<(), TestbedError> {
        let rewards: Vec<f64> = self.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value_pred).collect();
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        self.estimates = Some(gae(&rewards, &values, &dones, self.bootstrap_value, gamma, lambda)?);
        Ok(())
    }

    pub fn advantages(&self) -> Option<&[f64]> {
        self.estimates.as_ref().map(|(a, _)| a.as_slice())
    }

    pub fn value_targets(&self) -> Option<&[f64]> {
        self.estimates.as_ref().map(|(_, t)| t.as_slice())
    }
}

/// An environment plus the observation and partial return carried between rollouts.
#[derive(Debug, Clone)]
pub struct EnvRunner {
    env: Env,
    observation: Vec<f64>,
    running_return: f64,
    rng: ChaCha8Rng,
}

impl EnvRunner {
    pub fn new(mut env: Env, action_rng: ChaCha8Rng) -> Self {
        let observation = env.reset();
        Self {
            env,
            observation,
            running_return: 0.0,
            rng: action_rng,
        }
    }

    pub fn env(&self) -> &Env {
        &self.env
    }
}

/// Steps `runner` for exactly `steps` transitions under the current policy.
///
/// Episode boundaries are recorded inline through `done`; the environment
/// resets itself and collection continues.
pub fn collect_rollout(
    params: &PolicyValueParams,
    runner: &mut EnvRunner,
    steps: usize,
) -> Result<RolloutBuffer, TestbedError> {
    if steps == 0 {
        return Err(TestbedError::InvalidConfig("rollout length must be at least 1".into()));
    }
    let mut transitions = Vec::with_capacity(steps);
    let mut episode_returns = Vec::new();
    for _ in 0..steps {
        let state = std::mem::take(&mut runner.observation);
        let (action, log_prob, value_pred) = params.act(&state, &mut runner.rng)?;
        let step = runner.env.step(action)?;
        runner.running_return += step.reward;
        if step.done {
            episode_returns.push(runner.running_return);
            runner.running_return = 0.0;
        }
        runner.observation = step.observation;
        transitions.push(Transition {
            state,
            action,
            reward: step.reward,
            done: step.done,
            value_pred,
            log_prob,
        });
    }
    let bootstrap_value = params.value_of(&runner.observation)?;
    let mut buffer = RolloutBuffer::new(transitions, bootstrap_value);
    buffer.episode_returns = episode_returns;
    Ok(buffer)
}

/// Mean value-network prediction over `states`.
pub fn mean_value_estimate(
    params: &PolicyValueParams,
    states: &[&[f64]],
) -> Result<f64, TestbedError> {
    if states.is_empty() {
        return Err(TestbedError::EmptyInput("mean_value_estimate needs at least one state"));
    }
    let mut sum = 0.0;
    for s in states {
        sum += params.value_of(s)?;
    }
    Ok(sum / states.len() as f64)
}
