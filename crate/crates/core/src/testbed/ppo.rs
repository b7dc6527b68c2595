//! Clipped-surrogate PPO with manual gradients.
//!
//! Minibatch loss: `L = L_pi + vlc * L_V - elc * H` where
//! `L_pi = -mean(min(rho * A, clip(rho, 1 - eps, 1 + eps) * A))`,
//! `L_V = mean((V(s) - target)^2)` and `H` is the mean policy entropy.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{OptimizerKind, PpoConfig};
use super::policy::{log_softmax, PolicyValueParams};
use super::rollout::RolloutBuffer;
use super::TestbedError;

/// One training example; `advantage` is used as given (normalize beforehand).
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub mean_ratio: f64,
}

impl LossParts {
    fn is_finite(&self) -> bool {
        self.total.is_finite() && self.policy.is_finite() && self.value.is_finite()
    }
}

/// Per-sample clipped objective `min(rho * A, clip(rho) * A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip_range: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_range, 1.0 + clip_range);
    (ratio * advantage).min(clipped * advantage)
}

/// Loss over `batch` and its gradient w.r.t. [`PolicyValueParams::flat_params`].
pub fn ppo_loss_and_grad(
    params: &PolicyValueParams,
    batch: &[Sample<'_>],
    clip_range: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> (LossParts, Vec<f64>) {
    let n_policy = params.policy.num_params();
    let mut grad = vec![0.0; params.num_params()];
    let (policy_grad, value_grad) = grad.split_at_mut(n_policy);
    let n = batch.len() as f64;
    let mut parts = LossParts::default();
    let mut clipped = 0usize;

    for s in batch {
        let (logits, cache) = params.policy.forward_cached(s.state);
        let logp = log_softmax(&logits);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let ratio = (logp[s.action] - s.old_log_prob).exp();
        let surr_unclipped = ratio * s.advantage;
        let clipped_ratio = ratio.clamp(1.0 - clip_range, 1.0 + clip_range);
        let surr_clipped = clipped_ratio * s.advantage;
        let objective = surr_unclipped.min(surr_clipped);
        let entropy: f64 = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();

        parts.policy -= objective / n;
        parts.entropy += entropy / n;
        parts.approx_kl += (s.old_log_prob - logp[s.action]) / n;
        parts.mean_ratio += ratio / n;
        if (ratio - 1.0).abs() > clip_range {
            clipped += 1;
        }

        // d(-objective/n)/d ratio: only the unclipped branch depends on theta.
        let d_ratio = if surr_unclipped <= surr_clipped {
            -s.advantage / n
        } else {
            0.0
        };
        let d_entropy = -entropy_coef / n;
        let grad_logits: Vec<f64> = (0..probs.len())
            .map(|k| {
                let indicator = if k == s.action { 1.0 } else { 0.0 };
                let d_ratio_d_logit = ratio * (indicator - probs[k]);
                let d_entropy_d_logit = -probs[k] * (logp[k] + entropy);
                d_ratio * d_ratio_d_logit + d_entropy * d_entropy_d_logit
            })
            .collect();
        params.policy.backward(&cache, &grad_logits, policy_grad);

        let (v, vcache) = params.value.forward_cached(s.state);
        let err = v[0] - s.target;
        parts.value += err * err / n;
        params
            .value
            .backward(&vcache, &[value_coef * 2.0 * err / n], value_grad);
    }
    parts.clip_fraction = clipped as f64 / n;
    parts.total = parts.policy + value_coef * parts.value - entropy_coef * parts.entropy;
    (parts, grad)
}

pub fn ppo_loss(
    params: &PolicyValueParams,
    batch: &[Sample<'_>],
    clip_range: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> LossParts {
    ppo_loss_and_grad(params, batch, clip_range, value_coef, entropy_coef).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPSILON: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => num_params,
        };
        Self {
            kind,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                params.iter_mut().zip(grad).for_each(|(p, g)| *p -= lr * g);
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - Self::BETA1.powi(t);
                let c2 = 1.0 - Self::BETA2.powi(t);
                for k in 0..params.len() {
                    let g = grad[k];
                    let m = &mut self.first_moment[k];
                    let v = &mut self.second_moment[k];
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    params[k] -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPSILON);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub minibatches: usize,
    pub mean_loss: LossParts,
    /// Loss of the very first minibatch, evaluated at the rollout parameters.
    pub initial_loss: LossParts,
}

fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
}

fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

/// Runs `update_epochs` passes of shuffled minibatch steps over all buffers.
///
/// Works on a copy: if any minibatch produces a non-finite loss or gradient the
/// error is returned and `params` / `optimizer` are left untouched.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyValueParams,
    optimizer: &mut Optimizer,
    buffers: &[RolloutBuffer],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, TestbedError> {
    let mut samples = Vec::new();
    for buf in buffers {
        let (Some(adv), Some(targets)) = (buf.advantages(), buf.value_targets()) else {
            return Err(TestbedError::MissingAdvantages);
        };
        for ((t, &a), &target) in buf.transitions.iter().zip(adv).zip(targets) {
            samples.push(Sample {
                state: &t.state,
                action: t.action,
                old_log_prob: t.log_prob,
                advantage: a,
                target,
            });
        }
    }
    if samples.is_empty() {
        return Err(TestbedError::EmptyInput("ppo_update needs at least one transition"));
    }

    let mut working = params.clone();
    let mut opt = optimizer.clone();
    let mut flat = working.flat_params();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = UpdateStats::default();
    let mut sums = LossParts::default();

    for _ in 0..cfg.update_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch: Vec<Sample<'_>> = chunk.iter().map(|&k| samples[k]).collect();
            if cfg.normalize_advantages && batch.len() > 1 {
                let mut adv: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
                normalize(&mut adv);
                batch.iter_mut().zip(adv).for_each(|(s, a)| s.advantage = a);
            }
            let (loss, mut grad) = ppo_loss_and_grad(
                &working,
                &batch,
                cfg.clip_range,
                cfg.value_loss_coefficient,
                cfg.entropy_loss_coefficient,
            );
            if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(TestbedError::NonFinite("ppo loss"));
            }
            if stats.minibatches == 0 {
                stats.initial_loss = loss;
            }
            if let Some(max) = cfg.max_grad_norm {
                clip_grad_norm(&mut grad, max);
            }
            opt.step(&mut flat, &grad, cfg.learning_rate);
            working.set_flat_params(&flat);
            stats.minibatches += 1;
            sums.total += loss.total;
            sums.policy += loss.policy;
            sums.value += loss.value;
            sums.entropy += loss.entropy;
            sums.clip_fraction += loss.clip_fraction;
            sums.approx_kl += loss.approx_kl;
            sums.mean_ratio += loss.mean_ratio;
        }
    }
    if !working.is_finite() {
        return Err(TestbedError::NonFinite("parameters"));
    }
    let k = stats.minibatches as f64;
    stats.mean_loss = LossParts {
        total: sums.total / k,
        policy: sums.policy / k,
        value: sums.value / k,
        entropy: sums.entropy / k,
        clip_fraction: sums.clip_fraction / k,
        approx_kl: sums.approx_kl / k,
        mean_ratio: sums.mean_ratio / k,
    };
    *params = working;
    *optimizer = opt;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_params(seed: u64) -> PolicyValueParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = PolicyValueParams::new(2, 2, &[3], &mut rng);
        // Larger policy weights than the default init so gradients are not tiny.
        let flat: Vec<f64> = p.flat_params().iter().map(|w| w * 50.0).collect();
        p.set_flat_params(&flat);
        p
    }

    #[test]
    fn clip_arithmetic() {
        assert_eq!(clipped_objective(1.5, 2.0, 0.2), 1.2 * 2.0);
        assert_eq!(clipped_objective(1.5, -2.0, 0.2), 1.5 * -2.0);
        assert_eq!(clipped_objective(0.5, -1.0, 0.2), 0.8 * -1.0);
        assert_eq!(clipped_objective(1.1, 3.0, 0.2), 1.1 * 3.0);
    }

    #[test]
    fn zero_advantages_give_no_policy_gradient_from_the_surrogate() {
        let p = tiny_params(0);
        let states = [[1.0, 0.0], [0.0, 1.0]];
        let batch: Vec<Sample> = states
            .iter()
            .enumerate()
            .map(|(k, s)| Sample {
                state: s,
                action: k,
                old_log_prob: -0.3,
                advantage: 0.0,
                target: 0.0,
            })
            .collect();
        let (loss, grad) = ppo_loss_and_grad(&p, &batch, 0.2, 0.5, 0.0);
        assert_eq!(loss.policy, 0.0);
        assert!(grad[..p.policy.num_params()].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn value_loss_vanishes_on_exact_targets() {
        let p = tiny_params(1);
        let states = [[1.0, 0.0], [0.3, 0.4]];
        let batch: Vec<Sample> = states
            .iter()
            .map(|s| Sample {
                state: s,
                action: 0,
                old_log_prob: -0.7,
                advantage: 0.5,
                target: p.value_of(s).unwrap(),
            })
            .collect();
        let (loss, grad) = ppo_loss_and_grad(&p, &batch, 0.2, 0.5, 0.0);
        assert_eq!(loss.value, 0.0);
        assert!(grad[p.policy.num_params()..].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adam_and_sgd_move_against_the_gradient() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut opt = Optimizer::new(kind, 2);
            let mut p = vec![1.0, -1.0];
            opt.step(&mut p, &[0.5, -0.5], 0.1);
            assert!(p[0] < 1.0 && p[1] > -1.0, "{kind:?}");
        }
    }

    #[test]
    fn grad_norm_is_clipped() {
        let mut g = vec![3.0, 4.0];
        clip_grad_norm(&mut g, 1.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
