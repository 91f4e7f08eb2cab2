use std::collections::HashSet;

use bakery_core::algorithm::{Label, MaxOrder, ModelParams};
use bakery_core::explorer::{
    explore_exhaustive, explore_random, l1_livelock_demo, reachable_states,
    round_robin_until_past_guard, ExploreConfig, Verdict, ViolationKind,
};
use bakery_core::{OverflowPolicy, RegisterModelKind, SystemState, Variant};

fn pp(n: usize, m: u32) -> ModelParams {
    ModelParams::new(Variant::BakeryPP, n, m)
}

fn states(params: ModelParams, depth: u32) -> HashSet<SystemState> {
    reachable_states(&ExploreConfig::new(params).with_max_depth(depth))
        .unwrap()
        .into_iter()
        .collect()
}

// A lone process visits each label of the increment path exactly once:
// NCS, L1, SetChoosing, MaxRead, MaxWrite, BoundCheck, ClearChoosing, L2, L3, CS, ExitWrite.
#[test]
fn solo_state_count_is_the_label_count() {
    for m in 1..=4 {
        assert_eq!(states(pp(1, m), 0).len(), 11, "m={m}");
        assert_eq!(states(pp(1, m).with_crashes(1), 0).len(), 22, "m={m}");
    }
}

#[test]
fn solo_process_never_takes_the_reset_branch() {
    for m in 1..=4 {
        let all = states(pp(1, m), 0);
        assert!(
            all.iter().all(|s| s.procs[0].pc != Label::ResetChoosing),
            "m={m}"
        );
        assert!(all.iter().all(|s| s.procs[0].local_max == 0), "m={m}");
    }
}

#[test]
fn reset_branch_is_reachable_with_two_processes() {
    let all = states(pp(2, 1), 0);
    assert!(all
        .iter()
        .any(|s| s.procs.iter().any(|p| p.pc == Label::ResetChoosing)));
}

#[test]
fn depth_bounded_sets_grow_monotonically_to_closure() {
    let closure = states(pp(2, 2), 0);
    let mut prev = HashSet::new();
    for depth in [1, 2, 4, 8, 16, 32, 64] {
        let cur = states(pp(2, 2), depth);
        assert!(prev.is_subset(&cur), "depth {depth}");
        assert!(cur.is_subset(&closure), "depth {depth}");
        prev = cur;
    }
    assert_eq!(prev, closure);
}

#[test]
fn atomic_states_project_into_safe_states() {
    for m in [1, 2] {
        let atomic = states(pp(2, m), 0);
        let safe: HashSet<SystemState> =
            states(pp(2, m).with_registers(RegisterModelKind::Safe), 0)
                .iter()
                .map(|s| s.stable_projection())
                .collect();
        for s in &atomic {
            assert!(safe.contains(&s.stable_projection()), "m={m}: {s}");
        }
    }
}

#[test]
fn any_max_order_is_also_clean() {
    let mut params = pp(3, 2).with_registers(RegisterModelKind::Safe);
    params.max_order = MaxOrder::Any;
    let r = explore_exhaustive(&ExploreConfig::new(params)).unwrap();
    assert_eq!(r.verdict, Verdict::Clean);
    assert!(r.closed);
}

#[test]
fn bakery_and_bakerypp_separate_on_every_small_config() {
    for n in 2..=3 {
        for m in 1..=3 {
            let plain = ModelParams::new(Variant::Bakery, n, m);
            let r = explore_exhaustive(&ExploreConfig::new(plain)).unwrap();
            assert_eq!(
                r.verdict,
                Verdict::Violated {
                    kind: ViolationKind::OverflowAttempt
                }
            );
            let v = r.violation.unwrap();
            assert_eq!(v.value, Some(m + 1));
            assert_eq!(v.trace.replay().unwrap().state_hash(), v.state_hash);

            let r = explore_exhaustive(&ExploreConfig::new(pp(n, m))).unwrap();
            assert_eq!(r.verdict, Verdict::Clean, "n={n} m={m}");
        }
    }
}

#[test]
fn wrapping_bakery_loses_mutual_exclusion() {
    for m in 1..=3 {
        let params = ModelParams::new(Variant::Bakery, 2, m).with_policy(OverflowPolicy::Wrap);
        let r = explore_exhaustive(&ExploreConfig::new(params)).unwrap();
        assert_eq!(
            r.verdict,
            Verdict::Violated {
                kind: ViolationKind::MutexViolation
            },
            "m={m}"
        );
        let v = r.violation.unwrap();
        assert_eq!(v.pids.len(), 2);
        assert_eq!(v.trace.replay().unwrap().state_hash(), v.state_hash);
    }
}

// Widening the flicker domain to M+1 lets a concurrent reader carry M+1
// into its maximum, which Bakery++ then tries to store.
#[test]
fn flicker_above_limit_breaks_the_bound() {
    let mut params = pp(2, 3).with_registers(RegisterModelKind::Safe);
    params.flicker_above_limit = true;
    let r = explore_exhaustive(&ExploreConfig::new(params)).unwrap();
    assert_eq!(
        r.verdict,
        Verdict::Violated {
            kind: ViolationKind::OverflowAttempt
        }
    );
    let v = r.violation.unwrap();
    assert_eq!(v.value, Some(4));
    assert_eq!(v.trace.replay().unwrap().state_hash(), v.state_hash);
}

#[test]
fn random_walks_hit_plain_bakery_overflow() {
    let cfg = ExploreConfig::new(ModelParams::new(Variant::Bakery, 3, 2)).with_walks(7, 500, 400);
    let r = explore_random(&cfg).unwrap();
    assert_eq!(
        r.verdict,
        Verdict::Violated {
            kind: ViolationKind::OverflowAttempt
        }
    );
    // Walks stop at the first hit; record how far in it came.
    let hit_at = r.walks_completed.unwrap();
    assert!(hit_at < 500, "first overflow after {hit_at} clean walks");
}

#[test]
fn slow_process_passes_guard_under_round_robin() {
    for m in [2, 3] {
        let demo = l1_livelock_demo(m, 3).unwrap();
        assert_eq!(demo.slow_trips, 3);
        assert!(!demo.slow_passed_guard);
        let steps = round_robin_until_past_guard(&pp(3, m), &demo.state, 2, 10_000).unwrap();
        assert!(steps.is_some_and(|s| s <= 10_000), "m={m}: {steps:?}");
    }
}

#[test]
fn resource_limit_is_reported_not_hidden() {
    let mut cfg = ExploreConfig::new(pp(3, 3));
    cfg.state_limit = 1000;
    let r = explore_exhaustive(&cfg).unwrap();
    assert_eq!(r.verdict, Verdict::ResourceExhausted { state_limit: 1000 });
    assert!(!r.closed);
}
