//! Two-phase relay: a full schedule, then fresh schedules restricted to the most
//! selected (COI) and least selected (NOI) clusters; the better restricted run wins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{BanditError, HpCluster, Scheduler, SchedulerConfig};
use crate::harness::{run_schedule, EpisodeFailure, Method, ScheduleRun, Selection};
use crate::testbed::{Testbed, TestbedError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelayError {
    #[error("relay needs at least two clusters, got {0}")]
    TooFewClusters(usize),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error("{phase} failed at episode {}: {}", failure.episode, failure.message)]
    PhaseFailed {
        phase: RelayPhase,
        failure: EpisodeFailure,
    },
    #[error("{phase} produced a non-finite performance")]
    NonFinitePerformance { phase: RelayPhase },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayPhase {
    Full,
    Coi,
    Noi,
}

impl RelayPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            RelayPhase::Full => "phase1",
            RelayPhase::Coi => "phase2_coi",
            RelayPhase::Noi => "phase2_noi",
        }
    }
}

impl std::fmt::Display for RelayPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(coi, noi)`: the first most-selected cluster and the last least-selected one.
pub fn identify_coi_noi(final_counts: &[(String, u64)]) -> Result<(String, String), RelayError> {
    if final_counts.len() < 2 {
        return Err(RelayError::TooFewClusters(final_counts.len()));
    }
    let mut coi = 0;
    let mut noi = 0;
    for (k, (_, n)) in final_counts.iter().enumerate() {
        if *n > final_counts[coi].1 {
            coi = k;
        }
        if *n <= final_counts[noi].1 {
            noi = k;
        }
    }
    Ok((final_counts[coi].0.clone(), final_counts[noi].0.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Run {
    pub phase: RelayPhase,
    pub clusters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayPlan {
    pub phase1_clusters: Vec<HpCluster>,
    pub coi: String,
    pub noi: String,
    pub phase2_runs: Vec<Phase2Run>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub phase: RelayPhase,
    pub clusters: Vec<String>,
    /// Mean episode return over the final 10% of the phase's episodes.
    pub performance: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone)]
pub struct RelayOutcome {
    pub plan: RelayPlan,
    pub phase1: ScheduleRun,
    pub phase2: Vec<(PhaseResult, ScheduleRun)>,
    /// Index into `phase2` of the better restricted run.
    pub winner: usize,
}

impl RelayOutcome {
    pub fn winner(&self) -> &PhaseResult {
        &self.phase2[self.winner].0
    }

    pub fn results(&self) -> Vec<PhaseResult> {
        let first = PhaseResult {
            phase: RelayPhase::Full,
            clusters: self.plan.phase1_clusters.iter().map(|c| c.name.clone()).collect(),
            performance: self.phase1.final_performance(),
            episodes: self.phase1.rows.len(),
        };
        std::iter::once(first)
            .chain(self.phase2.iter().map(|(r, _)| r.clone()))
            .collect()
    }
}

fn run_phase<T: Testbed>(
    phase: RelayPhase,
    clusters: Vec<HpCluster>,
    config: SchedulerConfig,
    episodes: usize,
    testbed: &mut T,
) -> Result<ScheduleRun, RelayError> {
    let scheduler = Scheduler::new(clusters, config)?;
    let run = run_schedule::<T, rand_chacha::ChaCha8Rng>(
        Method::Relay,
        Selection::Ucb,
        Some(scheduler),
        testbed,
        episodes,
    );
    match run.failure.clone() {
        Some(failure) => Err(RelayError::PhaseFailed { phase, failure }),
        None => Ok(run),
    }
}

/// Phase 1 over all clusters, then one fresh restricted run each for COI and NOI.
///
/// `make_testbed` is called once per phase; every phase trains from scratch,
/// so the total budget is three single runs.
pub fn run_relay<T, F>(
    clusters: Vec<HpCluster>,
    config: SchedulerConfig,
    episodes: usize,
    mut make_testbed: F,
) -> Result<RelayOutcome, RelayError>
where
    T: Testbed,
    F: FnMut(RelayPhase) -> Result<T, TestbedError>,
{
    if clusters.len() < 2 {
        return Err(RelayError::TooFewClusters(clusters.len()));
    }
    let mut testbed = make_testbed(RelayPhase::Full)?;
    let phase1 = run_phase(RelayPhase::Full, clusters.clone(), config, episodes, &mut testbed)?;
    let counts = phase1
        .scheduler
        .as_ref()
        .expect("ucb runs keep their scheduler")
        .cluster_counts();
    let (coi, noi) = identify_coi_noi(&counts)?;

    let mut phase2 = Vec::with_capacity(2);
    for (phase, name) in [(RelayPhase::Coi, &coi), (RelayPhase::Noi, &noi)] {
        let restricted: Vec<HpCluster> = clusters.iter().filter(|c| &c.name == name).cloned().collect();
        let mut testbed = make_testbed(phase)?;
        let run = run_phase(phase, restricted, config, episodes, &mut testbed)?;
        let performance = run.final_performance();
        if !performance.is_finite() {
            return Err(RelayError::NonFinitePerformance { phase });
        }
        let result = PhaseResult {
            phase,
            clusters: vec![name.clone()],
            performance,
            episodes: run.rows.len(),
        };
        phase2.push((result, run));
    }
    // Ties keep the COI run.
    let winner = if phase2[1].0.performance > phase2[0].0.performance { 1 } else { 0 };
    let plan = RelayPlan {
        phase1_clusters: clusters,
        coi: coi.clone(),
        noi: noi.clone(),
        phase2_runs: vec![
            Phase2Run {
                phase: RelayPhase::Coi,
                clusters: vec![coi],
            },
            Phase2Run {
                phase: RelayPhase::Noi,
                clusters: vec![noi],
            },
        ],
    };
    Ok(RelayOutcome {
        plan,
        phase1,
        phase2,
        winner,
    })
}
