//! Seeded random walks.
//!
//! Walk `w` draws from ChaCha8 seeded with the configured seed on stream
//! `w`, so walks are independent and a run is reproducible from its config.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_state, ExploreConfig, ExploreError, Report, Verdict, Violation, ViolationKind,
    REPORT_FORMAT,
};
use crate::algorithm::{Choice, Protocol, StepError, SystemState};
use crate::explorer::Trace;

pub const PRNG_NAME: &str = "chacha8(seed, stream=walk index)";

/// How a single walk ended.
#[derive(Clone, Debug)]
pub enum WalkOutcome {
    Completed {
        steps: u32,
    },
    Violated {
        kind: ViolationKind,
        path: Vec<(usize, Choice)>,
    },
}

fn walk_rng(seed: u64, walk: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(walk as u64);
    rng
}

/// One uniform random walk of at most `length` steps. Every visited state
/// is passed to `visit`.
pub fn random_walk(
    proto: &Protocol,
    seed: u64,
    walk: u32,
    length: u32,
    mut visit: impl FnMut(&SystemState),
) -> WalkOutcome {
    let mut rng = walk_rng(seed, walk);
    let mut state = proto.initial_state();
    let mut path = Vec::new();
    visit(&state);
    if let Some(&kind) = check_state(proto.params(), &state).first() {
        return WalkOutcome::Violated { kind, path };
    }
    for step in 0..length {
        let actions = proto.enabled_actions(&state);
        if actions.is_empty() {
            return WalkOutcome::Completed { steps: step };
        }
        let (pid, choice) = actions[rng.gen_range(0..actions.len())];
        path.push((pid, choice));
        match proto.apply(&state, pid, choice) {
            Ok((next, _)) => state = next,
            Err(StepError::Overflow { .. }) => {
                return WalkOutcome::Violated {
                    kind: ViolationKind::OverflowAttempt,
                    path,
                };
            }
            Err(e) => panic!("enabled action failed: {e}"),
        }
        visit(&state);
        if let Some(&kind) = check_state(proto.params(), &state).first() {
            return WalkOutcome::Violated { kind, path };
        }
    }
    WalkOutcome::Completed { steps: length }
}

/// `cfg.walks` independent walks of `cfg.walk_length` steps; stops at the
/// first violation.
pub fn explore_random(cfg: &ExploreConfig) -> Result<Report, ExploreError> {
    cfg.validate_random()?;
    let proto = cfg.protocol()?;
    let start = Instant::now();
    let mut seen: HashSet<SystemState> = HashSet::new();
    let mut transitions = 0u64;
    let mut dedup_hits = 0u64;
    let mut longest = 0u32;
    let mut violation = None;
    let mut completed = 0;
    for walk in 0..cfg.walks {
        let outcome = random_walk(&proto, cfg.seed, walk, cfg.walk_length, |s| {
            if !seen.contains(s) {
                seen.insert(s.clone());
            } else {
                dedup_hits += 1;
            }
        });
        match outcome {
            WalkOutcome::Completed { steps } => {
                transitions += steps as u64;
                longest = longest.max(steps);
                completed += 1;
            }
            WalkOutcome::Violated { kind, path } => {
                transitions += path.len() as u64;
                violation = Some(build_violation(cfg, kind, &path));
                break;
            }
        }
    }
    if let Some(v) = &violation {
        longest = longest.max(v.trace.len() as u32);
    }
    Ok(Report {
        format: REPORT_FORMAT,
        config: cfg.clone(),
        mode: "random",
        verdict: match &violation {
            Some(v) => Verdict::Violated { kind: v.kind },
            None => Verdict::Clean,
        },
        violation,
        states_visited: seen.len() as u64,
        transitions,
        dedup_hits,
        max_depth_reached: longest,
        closed: false,
        walks_completed: Some(completed),
        prng: Some(PRNG_NAME),
        elapsed: start.elapsed(),
    })
}

fn build_violation(
    cfg: &ExploreConfig,
    kind: ViolationKind,
    path: &[(usize, Choice)],
) -> Violation {
    let (trace, state, overflow) = Trace::record(cfg, path, Some(kind)).expect("walk path replays");
    let (pids, register, value) = match overflow {
        Some(StepError::Overflow {
            pid,
            register,
            value,
            ..
        }) => (vec![pid], Some(register), Some(value)),
        _ => (state.in_critical_section(), None, None),
    };
    let depth = match kind {
        ViolationKind::OverflowAttempt => path.len() as u32 - 1,
        _ => path.len() as u32,
    };
    Violation {
        kind,
        pids,
        register,
        value,
        depth,
        state_hash: state.fingerprint(),
        state,
        trace,
    }
}
