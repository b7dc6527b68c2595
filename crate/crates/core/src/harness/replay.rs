//! Re-derives every logged decision from the logged utility sequence.
//!
//! The arithmetic here is deliberately separate from [`crate::bandit`]: plain
//! vectors of samples, recomputed means and a linear argmax.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::driver::random_arm;
use super::log::{meta_path_for, read_json, LogMeta, BASELINE_CLUSTER, BASELINE_HP, DECISION_HEADER};
use super::{DecisionLogRow, HarnessError, Method};
use crate::bandit::HpCluster;
use crate::numfmt::fmt_g;
use crate::seeding;

/// Relative tolerance for logged real-valued statistics.
const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub episode: u64,
    /// Column names that disagree with the resimulation.
    pub fields: Vec<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayVerdict {
    pub rows: usize,
    pub mismatches: Vec<Mismatch>,
    pub ordering_errors: Vec<String>,
}

impl ReplayVerdict {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty() && self.ordering_errors.is_empty()
    }
}

pub fn read_decision_log(path: &Path) -> Result<Vec<DecisionLogRow>, HarnessError> {
    let p = path.display().to_string();
    let parse_err = |line: u64, message: String| HarnessError::Parse {
        path: p.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| HarnessError::csv(path, e))?;
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.iter().ne(DECISION_HEADER.iter().copied()) {
        return Err(parse_err(1, format!("unexpected header: {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(k).unwrap_or("");
        let real = |k: usize| -> Result<f64, HarnessError> {
            let v: f64 = field(k)
                .parse()
                .map_err(|_| parse_err(line, format!("{}: not a number: '{}'", DECISION_HEADER[k], field(k))))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, format!("{}: non-finite value", DECISION_HEADER[k])))
            }
        };
        let int = |k: usize| -> Result<u64, HarnessError> {
            field(k)
                .parse()
                .map_err(|_| parse_err(line, format!("{}: not an integer: '{}'", DECISION_HEADER[k], field(k))))
        };
        let method = Method::parse(field(1))
            .ok_or_else(|| parse_err(line, format!("method: unknown '{}'", field(1))))?;
        let return_carried = match field(13) {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(line, format!("return_carried: expected 0 or 1, got '{other}'"))),
        };
        rows.push(DecisionLogRow {
            episode: int(0)?,
            method,
            cluster: field(2).to_string(),
            hp_name: field(3).to_string(),
            hp_value: real(4)?,
            v_bar: real(5)?,
            mean_episode_return: real(6)?,
            cluster_u: real(7)?,
            cluster_n: int(8)?,
            hp_u: real(9)?,
            hp_n: int(10)?,
            cluster_bonus: real(11)?,
            hp_bonus: real(12)?,
            return_carried,
        });
    }
    Ok(rows)
}

/// Replays `log` against the `decisions.meta.json` sidecar next to it.
pub fn replay(log: &Path) -> Result<ReplayVerdict, HarnessError> {
    let rows = read_decision_log(log)?;
    let meta: LogMeta = read_json(&meta_path_for(log))?;
    Ok(replay_rows(&rows, &meta))
}

pub fn replay_rows(rows: &[DecisionLogRow], meta: &LogMeta) -> ReplayVerdict {
    let mut verdict = ReplayVerdict {
        rows: rows.len(),
        ..Default::default()
    };
    for (k, r) in rows.iter().enumerate() {
        let expected = k as u64 + 1;
        if r.episode != expected {
            verdict
                .ordering_errors
                .push(format!("row {}: episode {} where {} was expected", k + 1, r.episode, expected));
        }
    }
    if rows.len() > meta.total_episodes {
        verdict.ordering_errors.push(format!(
            "{} rows for a {}-episode run",
            rows.len(),
            meta.total_episodes
        ));
    }
    if !verdict.ordering_errors.is_empty() {
        return verdict;
    }

    let mut sim = Resim::new(&meta.clusters, meta.scheduler.exploration_coefficient, meta.scheduler.window_capacity);
    let mut rng = seeding::stream(meta.seed, seeding::RANDOM_SEARCH);
    for r in rows {
        let mut fields = Vec::new();
        let mut detail = Vec::new();
        if r.method != meta.method {
            fields.push("method".to_string());
        }
        if !r.v_bar.is_finite() || !r.mean_episode_return.is_finite() {
            fields.push("v_bar".to_string());
        }
        if meta.method == Method::Fixed {
            let baseline = r.cluster == BASELINE_CLUSTER
                && r.hp_name == BASELINE_HP
                && r.hp_value == 0.0
                && [r.cluster_u, r.hp_u, r.cluster_bonus, r.hp_bonus].iter().all(|&x| x == 0.0)
                && r.cluster_n == 0
                && r.hp_n == 0;
            if !baseline {
                fields.push("cluster".to_string());
                detail.push("fixed rows carry the baseline placeholder".to_string());
            }
        } else {
            // Continue along the logged arm when it exists so one bad row
            // does not cascade into every later one.
            let logged = sim.locate(&r.cluster, &r.hp_name);
            let (ci, hi) = match meta.method {
                Method::Random => random_arm(&meta.clusters, &mut rng),
                // Logged utilities carry 12 significant digits, so a logged arm
                // within rounding of the maximum is accepted.
                _ => match logged {
                    Some(arm) if sim.is_near_max(arm) => arm,
                    _ => sim.argmax(),
                },
            };
            let want_cluster = &meta.clusters[ci];
            let want_hp = &want_cluster.members[hi];
            if r.cluster != want_cluster.name {
                fields.push("cluster".to_string());
            }
            if r.hp_name != want_hp.name {
                fields.push("hp_name".to_string());
            }
            if !fields.is_empty() {
                detail.push(format!("expected {}/{}", want_cluster.name, want_hp.name));
            }
            let (ci, hi) = logged.unwrap_or((ci, hi));
            let member = &meta.clusters[ci].members[hi];
            if r.hp_value != round12(member.value) {
                fields.push("hp_value".to_string());
                detail.push(format!("{} holds {}, logged {}", member.name, fmt_g(member.value), fmt_g(r.hp_value)));
            }
            let (cu, cn, cb) = sim.cluster_arm(ci);
            let (hu, hn, hb) = sim.hp_arm(ci, hi);
            for (name, logged, want) in [
                ("cluster_U", r.cluster_u, cu),
                ("hp_U", r.hp_u, hu),
                ("cluster_bonus", r.cluster_bonus, cb),
                ("hp_bonus", r.hp_bonus, hb),
            ] {
                if !close(logged, want) {
                    fields.push(name.to_string());
                    detail.push(format!("{name} {} vs {}", fmt_g(logged), fmt_g(want)));
                }
            }
            if r.cluster_n != cn {
                fields.push("cluster_N".to_string());
            }
            if r.hp_n != hn {
                fields.push("hp_N".to_string());
            }
            sim.record(ci, hi, r.v_bar);
        }
        if !fields.is_empty() {
            verdict.mismatches.push(Mismatch {
                episode: r.episode,
                fields,
                detail: detail.join("; "),
            });
        }
    }
    verdict
}

fn round12(x: f64) -> f64 {
    fmt_g(x).parse().unwrap_or(f64::NAN)
}

fn close(logged: f64, want: f64) -> bool {
    (logged - want).abs() <= REL_TOL * want.abs().max(1e-300) + 1e-12
}

struct Arm {
    samples: Vec<f64>,
    count: u64,
}

impl Arm {
    fn new() -> Self {
        Arm {
            samples: Vec::new(),
            count: 1,
        }
    }

    fn mean(&self, w: usize) -> f64 {
        let tail = &self.samples[self.samples.len().saturating_sub(w)..];
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

struct Resim<'a> {
    clusters: &'a [HpCluster],
    c: f64,
    w: usize,
    episode: u64,
    cluster_arms: Vec<Arm>,
    hp_arms: Vec<Vec<Arm>>,
}

impl<'a> Resim<'a> {
    fn new(clusters: &'a [HpCluster], c: f64, w: usize) -> Self {
        Resim {
            clusters,
            c,
            w,
            episode: 1,
            cluster_arms: clusters.iter().map(|_| Arm::new()).collect(),
            hp_arms: clusters
                .iter()
                .map(|cl| cl.members.iter().map(|_| Arm::new()).collect())
                .collect(),
        }
    }

    fn stats(&self, arm: &Arm) -> (f64, u64, f64) {
        let bonus = self.c * ((self.episode as f64).ln() / arm.count as f64).sqrt();
        (arm.mean(self.w), arm.count, bonus)
    }

    fn cluster_arm(&self, ci: usize) -> (f64, u64, f64) {
        self.stats(&self.cluster_arms[ci])
    }

    fn hp_arm(&self, ci: usize, hi: usize) -> (f64, u64, f64) {
        self.stats(&self.hp_arms[ci][hi])
    }

    fn first_max(&self, arms: &[Arm]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, a) in arms.iter().enumerate() {
            let score = self.score(a);
            if score > best_score {
                best = k;
                best_score = score;
            }
        }
        best
    }

    fn score(&self, arm: &Arm) -> f64 {
        let (u, _, b) = self.stats(arm);
        u + b
    }

    fn is_near_max(&self, (ci, hi): (usize, usize)) -> bool {
        let near = |arms: &[Arm], k: usize| {
            let best = arms.iter().map(|a| self.score(a)).fold(f64::NEG_INFINITY, f64::max);
            self.score(&arms[k]) >= best - REL_TOL * best.abs().max(1.0)
        };
        near(&self.cluster_arms, ci) && near(&self.hp_arms[ci], hi)
    }

    fn argmax(&self) -> (usize, usize) {
        let ci = self.first_max(&self.cluster_arms);
        (ci, self.first_max(&self.hp_arms[ci]))
    }

    fn locate(&self, cluster: &str, hp: &str) -> Option<(usize, usize)> {
        let ci = self.clusters.iter().position(|c| c.name == cluster)?;
        let hi = self.clusters[ci].members.iter().position(|m| m.name == hp)?;
        Some((ci, hi))
    }

    fn record(&mut self, ci: usize, hi: usize, v: f64) {
        for arm in [&mut self.cluster_arms[ci], &mut self.hp_arms[ci][hi]] {
            arm.samples.push(v);
            arm.count += 1;
        }
        self.episode += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{Decision, SchedulerConfig, Scheduler};
    use crate::harness::log::write_decision_log;
    use crate::harness::{run_schedule, Selection};
    use crate::testbed::{EpisodeOutcome, Testbed, TestbedError};
    use rand_chacha::ChaCha8Rng;

    /// Deterministic utility with a drift so windows matter.
    struct Drift(u64);

    impl Testbed for Drift {
        fn run_episode(&mut self, d: Option<&Decision>) -> Result<EpisodeOutcome, TestbedError> {
            self.0 += 1;
            let v = d.map_or(0.0, |d| d.hp_value) * (1.0 + (self.0 as f64 * 0.37).sin()) / 3.0;
            Ok(EpisodeOutcome {
                v_bar: v,
                mean_episode_return: v,
                return_carried: false,
            })
        }
    }

    fn meta(method: Method) -> LogMeta {
        LogMeta {
            method,
            seed: 11,
            scheduler: SchedulerConfig::new(0.7, 3),
            clusters: vec![
                HpCluster::from_values("a", &[0.3, 1.0 / 3.0, 0.9]),
                HpCluster::from_values("b", &[0.5, 0.6]),
            ],
            total_episodes: 60,
        }
    }

    fn logged(method: Method) -> (Vec<DecisionLogRow>, LogMeta) {
        let m = meta(method);
        let sched = Scheduler::new(m.clusters.clone(), m.scheduler).unwrap();
        let mut tb = Drift(0);
        let run = match method {
            Method::Random => {
                let mut rng = seeding::stream(m.seed, seeding::RANDOM_SEARCH);
                run_schedule(method, Selection::Random(&mut rng), Some(sched), &mut tb, m.total_episodes)
            }
            Method::Fixed => run_schedule::<_, ChaCha8Rng>(method, Selection::Baseline, None, &mut tb, m.total_episodes),
            _ => run_schedule::<_, ChaCha8Rng>(method, Selection::Ucb, Some(sched), &mut tb, m.total_episodes),
        };
        // Round-trip through the CSV so the replay sees the formatted values.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decisions.csv");
        write_decision_log(&path, &run.rows).unwrap();
        (read_decision_log(&path).unwrap(), m)
    }

    #[test]
    fn untampered_logs_replay_cleanly() {
        for method in [Method::Fixed, Method::Random, Method::Ultho, Method::Relay] {
            let (rows, m) = logged(method);
            let v = replay_rows(&rows, &m);
            assert!(v.is_clean(), "{method}: {v:?}");
            assert_eq!(v.rows, 60);
        }
    }

    #[test]
    fn edited_hp_value_is_one_mismatch() {
        let (mut rows, m) = logged(Method::Ultho);
        rows[17].hp_value += 0.01;
        let v = replay_rows(&rows, &m);
        assert_eq!(v.mismatches.len(), 1, "{v:?}");
        assert_eq!(v.mismatches[0].episode, 18);
        assert_eq!(v.mismatches[0].fields, vec!["hp_value"]);
    }

    #[test]
    fn swapped_choice_is_detected() {
        let (mut rows, m) = logged(Method::Random);
        let other = if rows[5].cluster == "a" { ("b", "0.5") } else { ("a", "0.3") };
        rows[5].cluster = other.0.into();
        rows[5].hp_name = other.1.into();
        let v = replay_rows(&rows, &m);
        assert!(v.mismatches.iter().any(|x| x.episode == 6 && x.fields.contains(&"cluster".to_string())));
    }

    #[test]
    fn shuffled_rows_are_an_ordering_error() {
        let (mut rows, m) = logged(Method::Ultho);
        rows.swap(3, 9);
        let v = replay_rows(&rows, &m);
        assert!(!v.ordering_errors.is_empty());
        assert!(!v.is_clean());
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decisions.csv");
        let (rows, _) = logged(Method::Ultho);
        write_decision_log(&path, &rows[..4]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replacen(",ultho,", ",ultho,x,", 1);
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_decision_log(&path).unwrap_err() {
            HarnessError::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected error {e}"),
        }
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cols: Vec<&str> = lines[2].split(',').collect();
        cols[5] = "zero";
        lines[2] = cols.join(",");
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_decision_log(&path).unwrap_err() {
            HarnessError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.starts_with("v_bar"), "{message}");
            }
            e => panic!("unexpected error {e}"),
        }
    }
}
