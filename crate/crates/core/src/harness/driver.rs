//! The per-episode loop shared by every method.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::log::{DecisionLogRow, BASELINE_CLUSTER, BASELINE_HP};
use super::Method;
use crate::bandit::{ArmRef, ConfidenceRecord, Decision, HpCluster, Scheduler};
use crate::testbed::Testbed;

/// How the arm for each episode is chosen.
pub enum Selection<'a, R: Rng + ?Sized> {
    /// No override; the scheduler is not consulted.
    Baseline,
    /// Uniform over all (cluster, value) pairs.
    Random(&'a mut R),
    /// Hierarchical UCB.
    Ucb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub episode: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ScheduleRun {
    pub rows: Vec<DecisionLogRow>,
    /// Every arm's confidence interval at each selection, in episode order.
    pub confidence: Vec<ConfidenceRecord>,
    pub failure: Option<EpisodeFailure>,
    pub scheduler: Option<Scheduler>,
}

impl ScheduleRun {
    pub fn final_performance(&self) -> f64 {
        final_performance(&self.rows)
    }

    pub fn cluster_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.cluster.as_str()) {
                names.push(&r.cluster);
            }
        }
        names
    }
}

/// Mean of `mean_episode_return` over the final 10% of rows (at least one).
pub fn final_performance(rows: &[DecisionLogRow]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    let tail = rows.len().div_ceil(10);
    let slice = &rows[rows.len() - tail..];
    slice.iter().map(|r| r.mean_episode_return).sum::<f64>() / tail as f64
}

/// Uniform draw over the flattened (cluster, value) arms.
pub fn random_arm<R: Rng + ?Sized>(clusters: &[HpCluster], rng: &mut R) -> (usize, usize) {
    let total: usize = clusters.iter().map(|c| c.members.len()).sum();
    let mut k = rng.random_range(0..total);
    for (ci, c) in clusters.iter().enumerate() {
        if k < c.members.len() {
            return (ci, k);
        }
        k -= c.members.len();
    }
    unreachable!("index drawn below the arm count")
}

/// Runs up to `episodes` select → train → record iterations.
///
/// A testbed error or a non-finite utility stops the loop; the rows completed
/// so far are kept and the failure is reported with its episode index.
pub fn run_schedule<T: Testbed + ?Sized, R: Rng + ?Sized>(
    method: Method,
    mut selection: Selection<'_, R>,
    mut scheduler: Option<Scheduler>,
    testbed: &mut T,
    episodes: usize,
) -> ScheduleRun {
    let mut rows = Vec::with_capacity(episodes);
    let mut confidence = Vec::new();
    let mut failure = None;

    for e in 1..=episodes as u64 {
        let decision = match (&mut selection, scheduler.as_mut()) {
            (Selection::Baseline, _) | (_, None) => None,
            (Selection::Random(rng), Some(s)) => {
                let (ci, hi) = random_arm(s.clusters(), *rng);
                let cluster = s.clusters()[ci].name.clone();
                let hp = s.clusters()[ci].members[hi].name.clone();
                Some(s.assign(&cluster, &hp))
            }
            (Selection::Ucb, Some(s)) => {
                confidence.extend(s.confidence_records());
                Some(s.select())
            }
        }
        .transpose();
        let decision = match decision {
            Ok(d) => d,
            Err(err) => {
                failure = Some(EpisodeFailure {
                    episode: e,
                    message: err.to_string(),
                });
                break;
            }
        };
        let arm_stats = decision
            .as_ref()
            .zip(scheduler.as_ref())
            .map(|(d, s)| selection_stats(s, d));

        let outcome = match testbed.run_episode(decision.as_ref()) {
            Ok(o) => o,
            Err(err) => {
                failure = Some(EpisodeFailure {
                    episode: e,
                    message: err.to_string(),
                });
                break;
            }
        };
        if let (Some(s), Some(_)) = (scheduler.as_mut(), decision.as_ref()) {
            if let Err(err) = s.record(outcome.v_bar) {
                failure = Some(EpisodeFailure {
                    episode: e,
                    message: err.to_string(),
                });
                break;
            }
        }
        let (cluster_rec, hp_rec) = arm_stats.unzip();
        let (cluster_u, cluster_n, cluster_bonus) = cluster_rec.unwrap_or((0.0, 0, 0.0));
        let (hp_u, hp_n, hp_bonus) = hp_rec.unwrap_or((0.0, 0, 0.0));
        rows.push(DecisionLogRow {
            episode: e,
            method,
            cluster: decision
                .as_ref()
                .map_or(BASELINE_CLUSTER.into(), |d| d.cluster_name.clone()),
            hp_name: decision
                .as_ref()
                .map_or(BASELINE_HP.into(), |d| d.hp_name.clone()),
            hp_value: decision.as_ref().map_or(0.0, |d| d.hp_value),
            v_bar: outcome.v_bar,
            mean_episode_return: outcome.mean_episode_return,
            cluster_u,
            cluster_n,
            hp_u,
            hp_n,
            cluster_bonus,
            hp_bonus,
            return_carried: outcome.return_carried,
        });
    }
    ScheduleRun {
        rows,
        confidence,
        failure,
        scheduler,
    }
}

type ArmTriple = (f64, u64, f64);

fn selection_stats(s: &Scheduler, d: &Decision) -> (ArmTriple, ArmTriple) {
    let triple = |arm: ArmRef| {
        let rec = s.confidence_bound(&arm).expect("decision arms exist");
        let n = match &arm.hp {
            None => s.cluster_stats(&arm.cluster).map(|a| a.count()),
            Some(hp) => s.hp_stats(&arm.cluster, hp).map(|a| a.count()),
        }
        .expect("decision arms exist");
        (rec.mean, n, rec.bonus)
    };
    (
        triple(ArmRef::cluster(&d.cluster_name)),
        triple(ArmRef::hp(&d.cluster_name, &d.hp_name)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::SchedulerConfig;
    use crate::testbed::{EpisodeOutcome, TestbedError};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Utility = chosen value; fails at a configured episode.
    struct Echo {
        calls: u64,
        fail_at: Option<u64>,
    }

    impl Testbed for Echo {
        fn run_episode(&mut self, d: Option<&Decision>) -> Result<EpisodeOutcome, TestbedError> {
            self.calls += 1;
            if Some(self.calls) == self.fail_at {
                return Err(TestbedError::NonFinite("ppo loss"));
            }
            let v = d.map_or(0.0, |d| d.hp_value);
            Ok(EpisodeOutcome {
                v_bar: v,
                mean_episode_return: v * 10.0,
                return_carried: false,
            })
        }
    }

    fn scheduler() -> Scheduler {
        Scheduler::new(
            vec![
                HpCluster::from_values("a", &[0.1, 0.2]),
                HpCluster::from_values("b", &[0.9]),
            ],
            SchedulerConfig::new(0.5, 4),
        )
        .unwrap()
    }

    #[test]
    fn ucb_rows_carry_selection_time_stats() {
        let mut tb = Echo { calls: 0, fail_at: None };
        let run = run_schedule::<_, ChaCha8Rng>(Method::Ultho, Selection::Ucb, Some(scheduler()), &mut tb, 20);
        assert_eq!(run.rows.len(), 20);
        assert!(run.failure.is_none());
        let first = &run.rows[0];
        assert_eq!((first.cluster.as_str(), first.hp_name.as_str()), ("a", "0.1"));
        assert_eq!((first.cluster_n, first.hp_n, first.cluster_u), (1, 1, 0.0));
        // Confidence log has every arm (2 clusters + 3 values) per episode.
        assert_eq!(run.confidence.len(), 20 * 5);
        let s = run.scheduler.unwrap();
        let total: u64 = s.cluster_counts().iter().map(|(_, n)| n - 1).sum();
        assert_eq!(total, 20);
    }

    #[test]
    fn baseline_rows_use_placeholder_labels() {
        let mut tb = Echo { calls: 0, fail_at: None };
        let run = run_schedule::<_, ChaCha8Rng>(Method::Fixed, Selection::Baseline, None, &mut tb, 3);
        assert!(run.rows.iter().all(|r| r.cluster == "none" && r.hp_name == "baseline"));
    }

    #[test]
    fn random_selection_covers_all_arms() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tb = Echo { calls: 0, fail_at: None };
        let run = run_schedule(Method::Random, Selection::Random(&mut rng), Some(scheduler()), &mut tb, 300);
        for hp in ["0.1", "0.2", "0.9"] {
            let n = run.rows.iter().filter(|r| r.hp_name == hp).count();
            assert!((70..130).contains(&n), "{hp}: {n}");
        }
    }

    #[test]
    fn failure_stops_the_loop_with_episode_index() {
        let mut tb = Echo { calls: 0, fail_at: Some(4) };
        let run = run_schedule::<_, ChaCha8Rng>(Method::Ultho, Selection::Ucb, Some(scheduler()), &mut tb, 10);
        assert_eq!(run.rows.len(), 3);
        assert_eq!(run.failure.unwrap().episode, 4);
    }

    #[test]
    fn final_performance_uses_last_tenth() {
        let mut tb = Echo { calls: 0, fail_at: None };
        let mut run = run_schedule::<_, ChaCha8Rng>(Method::Fixed, Selection::Baseline, None, &mut tb, 25);
        for (k, r) in run.rows.iter_mut().enumerate() {
            r.mean_episode_return = k as f64;
        }
        // ceil(25 / 10) = 3 rows: 22, 23, 24
        assert_eq!(run.final_performance(), 23.0);
    }
}
