use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::driver::{run_schedule, EpisodeFailure, ScheduleRun, Selection};
use super::log::{meta_path_for, write_confidence_log, write_decision_log, write_json, LogMeta};
use super::{ExperimentConfig, HarnessError, Method};
use crate::bandit::{HpCluster, Scheduler};
use crate::relay::{run_relay, PhaseResult, RelayError, RelayPhase, RelayPlan};
use crate::seeding;
use crate::testbed::PpoTestbed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaySummary {
    pub plan: RelayPlan,
    pub phases: Vec<PhaseResult>,
    pub winner: RelayPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    /// Mean return over the final 10% of episodes; for relay, the winning phase's.
    pub final_return: Option<f64>,
    pub completed_episodes: usize,
    pub failure: Option<EpisodeFailure>,
    /// Final per-cluster counts `N`, when a scheduler was used.
    pub cluster_counts: Vec<(String, u64)>,
    pub decision_logs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay: Option<RelaySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub total_episodes: usize,
    pub seeds: Vec<SeedReport>,
    /// Mean and standard error over seeds that finished.
    pub mean_final_return: Option<f64>,
    pub stderr_final_return: Option<f64>,
    pub failed_seeds: usize,
}

impl RunReport {
    pub fn from_seeds(method: Method, total_episodes: usize, seeds: Vec<SeedReport>) -> Self {
        let finals: Vec<f64> = seeds.iter().filter_map(|s| s.final_return).collect();
        let (mean, stderr) = mean_stderr(&finals).unzip();
        RunReport {
            method,
            total_episodes,
            failed_seeds: seeds.iter().filter(|s| s.failure.is_some()).count(),
            seeds,
            mean_final_return: mean,
            stderr_final_return: stderr,
        }
    }
}

/// Sample mean and standard error (zero for a single value).
pub fn mean_stderr(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

/// Runs every seed in parallel and, when `output_dir` is set, writes
/// `seed_<s>/decisions.csv` (+ sidecar and confidence log) and `summary.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let seeds = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let report = RunReport::from_seeds(config.method, config.total_episodes, seeds);
    if let Some(out) = &config.output_dir {
        write_json(&out.join("summary.json"), &report)?;
    }
    Ok(report)
}

fn testbed(config: &ExperimentConfig, seed: u64) -> Result<PpoTestbed, crate::testbed::TestbedError> {
    let targets = if config.method == Method::Fixed {
        Vec::new()
    } else {
        config
            .targets()
            .expect("validated config resolves targets")
    };
    PpoTestbed::new(&config.env, config.ppo.clone(), targets, config.override_mode, seed)
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedReport, HarnessError> {
    let seed_dir = config.output_dir.as_ref().map(|d| d.join(format!("seed_{seed}")));
    if config.method == Method::Relay {
        return run_relay_seed(config, seed, seed_dir.as_deref());
    }
    let mut tb = testbed(config, seed)?;
    let n = config.total_episodes;
    let run = match config.method {
        Method::Fixed => run_schedule::<_, rand_chacha::ChaCha8Rng>(config.method, Selection::Baseline, None, &mut tb, n),
        Method::Random => {
            let mut rng = seeding::stream(seed, seeding::RANDOM_SEARCH);
            let s = Scheduler::new(config.hp_clusters(), config.scheduler)?;
            run_schedule(config.method, Selection::Random(&mut rng), Some(s), &mut tb, n)
        }
        Method::Ultho => {
            let s = Scheduler::new(config.hp_clusters(), config.scheduler)?;
            run_schedule::<_, rand_chacha::ChaCha8Rng>(config.method, Selection::Ucb, Some(s), &mut tb, n)
        }
        Method::Relay => unreachable!(),
    };
    let clusters = if config.method == Method::Fixed { Vec::new() } else { config.hp_clusters() };
    let logs = match &seed_dir {
        Some(dir) => vec![write_run(dir, &run, config, seed, clusters)?],
        None => Vec::new(),
    };
    Ok(SeedReport {
        seed,
        final_return: run.failure.is_none().then(|| run.final_performance()),
        completed_episodes: run.rows.len(),
        failure: run.failure.clone(),
        cluster_counts: run.scheduler.as_ref().map(|s| s.cluster_counts()).unwrap_or_default(),
        decision_logs: logs,
        relay: None,
    })
}

fn write_run(
    dir: &Path,
    run: &ScheduleRun,
    config: &ExperimentConfig,
    seed: u64,
    clusters: Vec<HpCluster>,
) -> Result<PathBuf, HarnessError> {
    let log = dir.join("decisions.csv");
    write_decision_log(&log, &run.rows)?;
    write_confidence_log(&dir.join("confidence.csv"), &run.confidence)?;
    let meta = LogMeta {
        method: config.method,
        seed,
        scheduler: config.scheduler,
        clusters,
        total_episodes: config.total_episodes,
    };
    write_json(&meta_path_for(&log), &meta)?;
    Ok(log)
}

/// Phase 1 uses the run seed itself, so it matches a plain ultho run.
fn phase_seed(seed: u64, phase: RelayPhase) -> u64 {
    match phase {
        RelayPhase::Full => seed,
        RelayPhase::Coi => seeding::relay_phase_seed(seed, 1),
        RelayPhase::Noi => seeding::relay_phase_seed(seed, 2),
    }
}

fn run_relay_seed(config: &ExperimentConfig, seed: u64, dir: Option<&Path>) -> Result<SeedReport, HarnessError> {
    let outcome = run_relay(config.hp_clusters(), config.scheduler, config.total_episodes, |phase| {
        testbed(config, phase_seed(seed, phase))
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(RelayError::PhaseFailed { phase, failure }) => {
            return Ok(SeedReport {
                seed,
                final_return: None,
                completed_episodes: 0,
                failure: Some(EpisodeFailure {
                    episode: failure.episode,
                    message: format!("{phase}: {}", failure.message),
                }),
                cluster_counts: Vec::new(),
                decision_logs: Vec::new(),
                relay: None,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let summary = RelaySummary {
        plan: outcome.plan.clone(),
        phases: outcome.results(),
        winner: outcome.winner().phase,
    };
    let mut logs = Vec::new();
    if let Some(dir) = dir {
        let all = config.hp_clusters();
        let restrict = |name: &str| all.iter().filter(|c| c.name == name).cloned().collect::<Vec<_>>();
        logs.push(write_run(&dir.join(RelayPhase::Full.as_str()), &outcome.phase1, config, seed, all.clone())?);
        for (result, run) in &outcome.phase2 {
            let sub = dir.join(result.phase.as_str());
            let s = phase_seed(seed, result.phase);
            logs.push(write_run(&sub, run, config, s, restrict(&result.clusters[0]))?);
        }
        write_json(&dir.join("relay.json"), &summary)?;
    }
    Ok(SeedReport {
        seed,
        final_return: Some(outcome.winner().performance),
        completed_episodes: outcome.phase1.rows.len() + outcome.phase2.iter().map(|(_, r)| r.rows.len()).sum::<usize>(),
        failure: None,
        cluster_counts: outcome.phase1.scheduler.as_ref().map(|s| s.cluster_counts()).unwrap_or_default(),
        decision_logs: logs,
        relay: Some(summary),
    })
}
