use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::TestbedError;

/// Separate policy (softmax over discrete actions) and value networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValueParams {
    pub policy: Mlp,
    pub value: Mlp,
}

impl PolicyValueParams {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        num_actions: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut policy_sizes = vec![obs_dim];
        policy_sizes.extend_from_slice(hidden);
        let mut value_sizes = policy_sizes.clone();
        policy_sizes.push(num_actions);
        value_sizes.push(1);
        // Small policy head so all actions start near-uniform.
        let policy = Mlp::new(&policy_sizes, 0.01, rng);
        let value = Mlp::new(&value_sizes, 1.0, rng);
        Self { policy, value }
    }

    pub fn num_actions(&self) -> usize {
        self.policy.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.policy.num_params() + self.value.num_params()
    }

    /// Policy parameters followed by value parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.policy.params().to_vec();
        out.extend_from_slice(self.value.params());
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let split = self.policy.num_params();
        self.policy.params_mut().copy_from_slice(&flat[..split]);
        self.value.params_mut().copy_from_slice(&flat[split..]);
    }

    pub fn is_finite(&self) -> bool {
        self.policy.params().iter().chain(self.value.params()).all(|p| p.is_finite())
    }

    pub fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>, TestbedError> {
        let probs = softmax(&self.policy.forward(obs));
        if probs.iter().all(|p| p.is_finite()) {
            Ok(probs)
        } else {
            Err(TestbedError::NonFinite("policy output"))
        }
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64, TestbedError> {
        let v = self.value.forward(obs)[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TestbedError::NonFinite("value output"))
        }
    }

    /// Samples an action, returning it with its log-probability and the state value.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        rng: &mut R,
    ) -> Result<(usize, f64, f64), TestbedError> {
        // Same log-softmax path as the PPO loss, so the first ratio is exactly 1.
        let logp = log_softmax(&self.policy.forward(obs));
        if !logp.iter().all(|l| l.is_finite()) {
            return Err(TestbedError::NonFinite("policy output"));
        }
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let action = sample_categorical(&probs, rng);
        Ok((action, logp[action], self.value_of(obs)?))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}
