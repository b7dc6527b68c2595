use proptest::prelude::*;

use super::*;

fn two_by_three() -> Vec<HpCluster> {
    vec![
        HpCluster::from_values("a", &[1.0, 2.0, 3.0]),
        HpCluster::from_values("b", &[4.0, 5.0, 6.0]),
    ]
}

fn procgen_clusters() -> Vec<HpCluster> {
    vec![
        HpCluster::from_values("LR", &[2.5e-4, 5e-4, 1e-3]),
        HpCluster::from_values("BS", &[512.0, 1024.0, 2048.0]),
        HpCluster::from_values("VLC", &[0.25, 0.5, 1.0]),
        HpCluster::from_values("NUE", &[3.0, 2.0, 1.0]),
    ]
}

/// Independent scorer: evaluates every arm from a snapshot and keeps the first maximum.
fn brute_force(snap: &Snapshot) -> (String, String) {
    let c = snap.config.exploration_coefficient;
    let i = snap.episode as f64;
    let score = |s: &ArmStatsSnapshot| s.utility + c * (i.ln() / s.count as f64).sqrt();
    let mut best_cluster = 0;
    for (k, cl) in snap.clusters.iter().enumerate() {
        if score(&cl.stats) > score(&snap.clusters[best_cluster].stats) {
            best_cluster = k;
        }
    }
    let cl = &snap.clusters[best_cluster];
    let mut best_hp = 0;
    for (k, m) in cl.members.iter().enumerate() {
        if score(&m.stats) > score(&cl.members[best_hp].stats) {
            best_hp = k;
        }
    }
    (cl.name.clone(), cl.members[best_hp].name.clone())
}

#[test]
fn new_scheduler_initialises_every_arm() {
    let s = Scheduler::new(two_by_three(), SchedulerConfig::new(1.0, 5)).unwrap();
    let snap = s.snapshot();
    assert_eq!(snap.clusters.len(), 2);
    assert_eq!(snap.clusters.iter().map(|c| c.members.len()).sum::<usize>(), 6);
    for c in &snap.clusters {
        assert_eq!((c.stats.count, c.stats.utility), (1, 0.0));
        assert!(c.stats.window.is_empty());
        for m in &c.members {
            assert_eq!((m.stats.count, m.stats.utility), (1, 0.0));
        }
    }
    assert_eq!(s.episode(), 1);
    assert!(s.pending().is_none());
}

#[test]
fn procgen_cluster_set_has_twelve_arms() {
    let s = Scheduler::new(procgen_clusters(), SchedulerConfig::default()).unwrap();
    assert_eq!(s.clusters().len(), 4);
    assert_eq!(s.confidence_records().len(), 4 + 12);
    assert_eq!(s.clusters()[0].members[0].name, "0.00025");
}

#[test]
fn construction_errors_name_the_offender() {
    let cfg = SchedulerConfig::default();
    assert_eq!(
        Scheduler::new(vec![], cfg).unwrap_err(),
        BanditError::EmptyClusterSet
    );
    let dup = vec![
        HpCluster::from_values("lr", &[1.0]),
        HpCluster::from_values("lr", &[2.0]),
    ];
    let err = Scheduler::new(dup, cfg).unwrap_err();
    assert!(err.to_string().contains("duplicate cluster"));
    assert!(err.to_string().contains("lr"));
    let empty = vec![HpCluster::new("bs", vec![])];
    assert_eq!(
        Scheduler::new(empty, cfg).unwrap_err(),
        BanditError::EmptyCluster("bs".into())
    );
    let dup_hp = vec![HpCluster::from_values("bs", &[1.0, 1.0])];
    assert!(matches!(
        Scheduler::new(dup_hp, cfg).unwrap_err(),
        BanditError::DuplicateHp { .. }
    ));
    let bad_c = SchedulerConfig::new(f64::NAN, 3);
    assert!(Scheduler::new(two_by_three(), bad_c).is_err());
    let bad_w = SchedulerConfig::new(1.0, 0);
    assert!(Scheduler::new(two_by_three(), bad_w).is_err());
}

#[test]
fn fresh_select_takes_first_arm() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::new(2.0, 5)).unwrap();
    let d = s.select().unwrap();
    assert_eq!((d.cluster_name.as_str(), d.hp_name.as_str()), ("a", "1"));
    assert_eq!(d.episode, 1);
    assert_eq!(d.cluster_score, 0.0);
}

#[test]
fn ucb_argmax_prefers_less_explored_cluster() {
    // A: U=0.5, N=3; B: U=0.4, N=1; c=1, i=8.
    let score_a = 0.5 + (8f64.ln() / 3.0).sqrt();
    let score_b = 0.4 + (8f64.ln() / 1.0).sqrt();
    assert!(score_b > score_a);
    let (idx, score) = ucb_argmax([(0.5, 3), (0.4, 1)], 8, 1.0).unwrap();
    assert_eq!(idx, 1);
    assert_eq!(score, score_b);
}

#[test]
fn ucb_argmax_breaks_ties_by_order() {
    assert_eq!(ucb_argmax([(0.2, 2), (0.2, 2), (0.1, 9)], 5, 1.0).unwrap().0, 0);
    assert!(ucb_argmax(std::iter::empty(), 5, 1.0).is_none());
}

#[test]
fn single_arm_is_always_chosen() {
    let mut s = Scheduler::new(
        vec![HpCluster::from_values("only", &[7.0])],
        SchedulerConfig::new(1.0, 3),
    )
    .unwrap();
    for k in 0..20 {
        let d = s.select().unwrap();
        assert_eq!((d.cluster_name.as_str(), d.hp_value), ("only", 7.0));
        s.record(k as f64).unwrap();
    }
}

#[test]
fn select_requires_record_in_between() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::default()).unwrap();
    s.select().unwrap();
    assert_eq!(s.select().unwrap_err(), BanditError::PendingTell);
    assert_eq!(s.assign("a", "1").unwrap_err(), BanditError::PendingTell);
    // select alone must not move counts
    assert_eq!(s.cluster_stats("a").unwrap().count(), 1);
}

#[test]
fn record_without_pending_is_rejected() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::default()).unwrap();
    assert_eq!(s.record(1.0).unwrap_err(), BanditError::NoPendingAsk);
}

#[test]
fn non_finite_record_leaves_state_unchanged() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::default()).unwrap();
    s.select().unwrap();
    let before = s.snapshot();
    for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
        assert_eq!(s.record(bad).unwrap_err(), BanditError::NonFiniteUtility);
        assert_eq!(s.snapshot(), before);
    }
    s.record(0.5).unwrap();
}

#[test]
fn record_updates_both_levels() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::new(1.0, 10)).unwrap();
    s.assign("a", "1").unwrap();
    s.record(1.0).unwrap();
    let hp = s.hp_stats("a", "1").unwrap();
    assert_eq!((hp.utility(), hp.count()), (1.0, 2));
    assert_eq!(s.cluster_stats("a").unwrap().utility(), 1.0);
    assert_eq!(s.episode(), 2);
    assert!(s.pending().is_none());
}

#[test]
fn cluster_window_pools_member_samples() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::new(1.0, 10)).unwrap();
    s.assign("a", "1").unwrap();
    s.record(2.0).unwrap();
    s.assign("a", "2").unwrap();
    s.record(4.0).unwrap();
    assert_eq!(s.cluster_stats("a").unwrap().utility(), 3.0);
    assert_eq!(s.hp_stats("a", "1").unwrap().utility(), 2.0);
    assert_eq!(s.hp_stats("a", "2").unwrap().utility(), 4.0);
}

#[test]
fn confidence_bound_matches_formula() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::new(1.0, 10)).unwrap();
    // Drive cluster "a" to N=3, U=0.5 and the episode counter to 8.
    for v in [0.25, 0.75] {
        s.assign("a", "1").unwrap();
        s.record(v).unwrap();
    }
    for _ in 0..5 {
        s.assign("b", "4").unwrap();
        s.record(0.0).unwrap();
    }
    assert_eq!(s.episode(), 8);
    let rec = s.confidence_bound(&ArmRef::cluster("a")).unwrap();
    let expected_bonus = (8f64.ln() / 3.0).sqrt();
    assert_eq!(rec.mean, 0.5);
    assert_eq!(rec.bonus, expected_bonus);
    assert_eq!(rec.upper, 0.5 + expected_bonus);
    assert_eq!(rec.upper, rec.mean + rec.bonus);

    let err = s.confidence_bound(&ArmRef::hp("a", "nope")).unwrap_err();
    assert_eq!(err.to_string(), "unknown arm 'a/nope'");
}

#[test]
fn zero_exploration_bound_is_the_mean() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::new(0.0, 10)).unwrap();
    s.select().unwrap();
    s.record(0.3).unwrap();
    let rec = s.confidence_bound(&ArmRef::cluster("a")).unwrap();
    assert_eq!(rec.upper, rec.mean);
    assert_eq!(rec.bonus, 0.0);
}

#[test]
fn bonus_monotone_in_count_and_episode() {
    assert!(exploration_bonus(1.0, 50, 1) > exploration_bonus(1.0, 50, 100));
    assert!(exploration_bonus(1.0, 51, 4) >= exploration_bonus(1.0, 50, 4));
    assert_eq!(exploration_bonus(3.0, 1, 1), 0.0);
}

#[test]
fn snapshot_is_a_value_copy() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::new(1.0, 4)).unwrap();
    let before = s.snapshot();
    s.select().unwrap();
    s.record(2.0).unwrap();
    let after = s.snapshot();
    assert_eq!(before.episode, 1);
    assert_eq!(before.clusters[0].stats.count, 1);
    assert_eq!(after.episode, 2);
    // Only the touched arms changed counts.
    assert_eq!(after.clusters[0].stats.count, 2);
    assert_eq!(after.clusters[0].members[0].stats.count, 2);
    assert_eq!(after.clusters[0].members[1].stats, before.clusters[0].members[1].stats);
    assert_eq!(after.clusters[1].stats, before.clusters[1].stats);
}

#[test]
fn snapshot_json_round_trip() {
    let mut s = Scheduler::new(procgen_clusters(), SchedulerConfig::new(1.3, 4)).unwrap();
    for v in [0.1, 1.0 / 3.0, 2.7e-5, -4.25] {
        s.select().unwrap();
        s.record(v).unwrap();
    }
    s.select().unwrap();
    let snap = s.snapshot();
    let json = snap.to_json();
    assert_eq!(Snapshot::from_json(&json).unwrap(), snap);
    // Stable key order.
    assert!(json.starts_with(r#"{"episode":5,"completed_episodes":4,"config":{"c":1.3,"W":4"#));
}

#[test]
fn proportions_subtract_initial_count() {
    let clusters = vec![
        HpCluster::from_values("A", &[1.0]),
        HpCluster::from_values("B", &[1.0]),
        HpCluster::from_values("C", &[1.0]),
    ];
    let mut s = Scheduler::new(clusters, SchedulerConfig::default()).unwrap();
    for (name, times) in [("A", 10), ("B", 5), ("C", 1)] {
        for _ in 0..times {
            s.assign(name, "1").unwrap();
            s.record(0.0).unwrap();
        }
    }
    assert_eq!(
        s.cluster_counts(),
        vec![("A".into(), 11), ("B".into(), 6), ("C".into(), 2)]
    );
    let p = s.selection_proportions().unwrap();
    assert_eq!(p.cluster("A"), Some(10.0 / 16.0));
    assert_eq!(p.cluster("B"), Some(5.0 / 16.0));
    assert_eq!(p.cluster("C"), Some(1.0 / 16.0));
}

#[test]
fn proportions_single_episode_and_empty() {
    let mut s = Scheduler::new(two_by_three(), SchedulerConfig::default()).unwrap();
    assert_eq!(
        s.selection_proportions().unwrap_err(),
        BanditError::NoCompletedEpisodes
    );
    s.select().unwrap();
    s.record(1.0).unwrap();
    let p = s.selection_proportions().unwrap();
    assert_eq!(p.cluster("a"), Some(1.0));
    assert_eq!(p.cluster("b"), Some(0.0));
}

#[test]
fn proportions_match_decision_log_tally() {
    let mut s = Scheduler::new(procgen_clusters(), SchedulerConfig::new(0.5, 5)).unwrap();
    let mut log = Vec::new();
    for k in 0..200u32 {
        let d = s.select().unwrap();
        let v = ((k * 37 % 11) as f64) / 10.0 + if d.cluster_name == "VLC" { 0.4 } else { 0.0 };
        s.record(v).unwrap();
        log.push(d);
    }
    let p = s.selection_proportions().unwrap();
    for (name, frac) in &p.clusters {
        let tally = log.iter().filter(|d| &d.cluster_name == name).count() as f64 / 200.0;
        assert_eq!(*frac, tally, "cluster {name}");
    }
    for (arm, frac) in &p.hps {
        let tally = log
            .iter()
            .filter(|d| d.cluster_name == arm.cluster && Some(&d.hp_name) == arm.hp.as_ref())
            .count() as f64
            / 200.0;
        assert_eq!(*frac, tally, "hp {arm}");
    }
    let total: f64 = p.hps.iter().map(|(_, f)| f).sum();
    assert!((total - 1.0).abs() <= 1e-12);
}

#[test]
fn confidence_csv_row_layout() {
    let s = Scheduler::new(two_by_three(), SchedulerConfig::default()).unwrap();
    let rows: Vec<_> = s.confidence_records().iter().map(|r| r.csv_row()).collect();
    assert_eq!(rows[0], ["1", "a", "0", "0", "0"].map(String::from));
    assert_eq!(rows[1][1], "a/1");
}

#[test]
fn cluster_wire_format_accepts_bare_and_named_values() {
    let c: HpCluster =
        serde_json::from_str(r#"{"name":"lr","values":[0.00025,{"name":"big","value":1e-3},512]}"#)
            .unwrap();
    assert_eq!(c.members[0], HpValue::new("0.00025", 0.00025));
    assert_eq!(c.members[1], HpValue::new("big", 1e-3));
    assert_eq!(c.members[2], HpValue::new("512", 512.0));
    let back: HpCluster = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
}

/// Random scheduler driven through a random assign/record script.
fn scripted_state(
    sizes: &[usize],
    c: f64,
    w: usize,
    script: &[(usize, usize, f64)],
) -> Scheduler {
    let clusters = sizes
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            HpCluster::new(
                format!("c{k}"),
                (0..m).map(|j| HpValue::new(format!("h{j}"), j as f64)).collect(),
            )
        })
        .collect();
    let mut s = Scheduler::new(clusters, SchedulerConfig::new(c, w)).unwrap();
    for &(ci, hi, v) in script {
        let ci = ci % sizes.len();
        let hi = hi % sizes[ci];
        s.assign(&format!("c{ci}"), &format!("h{hi}")).unwrap();
        s.record(v).unwrap();
    }
    s
}

fn script_strategy() -> impl Strategy<Value = (Vec<usize>, f64, usize, Vec<(usize, usize, f64)>)> {
    (
        prop::collection::vec(1usize..5, 1..5),
        0.0f64..5.0,
        1usize..8,
        prop::collection::vec((0usize..8, 0usize..8, -2.0f64..2.0), 0..60),
    )
}

proptest! {
    #[test]
    fn select_matches_brute_force((sizes, c, w, script) in script_strategy()) {
        let mut s = scripted_state(&sizes, c, w, &script);
        let expected = brute_force(&s.snapshot());
        let d = s.select().unwrap();
        prop_assert_eq!((d.cluster_name, d.hp_name), expected);
    }

    #[test]
    fn counts_are_conserved((sizes, c, w, script) in script_strategy()) {
        let s = scripted_state(&sizes, c, w, &script);
        let snap = s.snapshot();
        let n = script.len() as u64;
        let cluster_sum: u64 = snap.clusters.iter().map(|c| c.stats.count).sum();
        let hp_sum: u64 = snap.clusters.iter().flat_map(|c| &c.members).map(|m| m.stats.count).sum();
        let arms: u64 = sizes.iter().map(|&m| m as u64).sum();
        prop_assert_eq!(cluster_sum - sizes.len() as u64, n);
        prop_assert_eq!(hp_sum - arms, n);
        prop_assert_eq!(s.episode(), n + 1);
    }

    #[test]
    fn argmax_is_shift_invariant(
        arms in prop::collection::vec((-3.0f64..3.0, 1u64..50), 1..8),
        episode in 1u64..500,
        c in 0.0f64..5.0,
        shift in -10.0f64..10.0,
    ) {
        let (plain, _) = ucb_argmax(arms.clone(), episode, c).unwrap();
        let (moved, _) = ucb_argmax(arms.iter().map(|&(u, n)| (u + shift, n)), episode, c).unwrap();
        // Rounding of the shifted sums can only flip near-exact ties.
        let scores: Vec<f64> = arms.iter().map(|&(u, n)| u + exploration_bonus(c, episode, n)).collect();
        let gap = scores.iter().enumerate()
            .filter(|&(k, _)| k != plain)
            .map(|(_, s)| scores[plain] - s)
            .fold(f64::INFINITY, f64::min);
        if gap > 1e-9 {
            prop_assert_eq!(plain, moved);
        }
    }

    #[test]
    fn decisions_are_deterministic(
        sizes in prop::collection::vec(1usize..4, 1..4),
        samples in prop::collection::vec(-1.0f64..1.0, 1..50),
        c in 0.0f64..3.0,
    ) {
        let run = || {
            let mut s = scripted_state(&sizes, c, 5, &[]);
            samples.iter().map(|&v| {
                let d = s.select().unwrap();
                s.record(v).unwrap();
                d
            }).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
