//! Generalized advantage estimation.

use super::TestbedError;

/// Backward GAE recursion.
///
/// `dones[t]` marks transition `t` as the last of its episode, which cuts both
/// the bootstrap `V(s_{t+1})` and the carried advantage. Returns
/// `(advantages, value_targets)` with `targets = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), TestbedError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(TestbedError::LengthMismatch {
            rewards: n,
            values: values.len(),
            dones: dones.len(),
        });
    }
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_advantage = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        next_advantage = delta + gamma * lambda * live * next_advantage;
        advantages[t] = next_advantage;
        next_value = values[t];
    }
    let targets = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_is_td_error() {
        let (a, t) = gae(&[0.7], &[0.2], &[false], 0.9, 1.0, 0.5).unwrap();
        assert_eq!(a, vec![0.7 + 0.9 - 0.2]);
        assert_eq!(t, vec![a[0] + 0.2]);
    }

    #[test]
    fn two_step_reference() {
        let (a, _) = gae(&[1.0, 1.0], &[0.5, 0.5], &[false, false], 0.5, 0.9, 0.8).unwrap();
        let delta = 1.0 + 0.9 * 0.5 - 0.5;
        assert!((delta - 0.95f64).abs() < 1e-15);
        assert_eq!(a[1], delta);
        assert!((a[0] - (0.95 + 0.72 * 0.95)).abs() < 1e-15);
    }

    #[test]
    fn zero_rewards_and_values_give_zero() {
        let (a, t) = gae(&[0.0; 5], &[0.0; 5], &[false, true, false, false, true], 0.0, 0.99, 0.95)
            .unwrap();
        assert!(a.iter().chain(&t).all(|&x| x == 0.0));
    }

    #[test]
    fn done_cuts_bootstrap() {
        let (a, _) = gae(&[1.0, 2.0], &[0.0, 0.0], &[true, true], 100.0, 0.9, 0.9).unwrap();
        assert_eq!(a, vec![1.0, 2.0]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.9, 0.9),
            Err(TestbedError::LengthMismatch { .. })
        ));
    }
}
