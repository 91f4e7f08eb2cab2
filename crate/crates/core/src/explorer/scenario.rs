//! Hand-scheduled runs: the alternating two-process schedule that drives an
//! unbounded Bakery ticket past the register limit, and the slow-reader
//! schedule that keeps a Bakery++ process tripping its L1 guard.

use super::{ExploreConfig, ExploreError, Trace, ViolationKind};
use crate::algorithm::{
    ActionKind, Choice, ConfigError, Label, ModelParams, Protocol, StepError, SystemState, Variant,
};

/// Upper bound on steps any single scripted phase may take.
const PHASE_LIMIT: usize = 10_000;

struct Script {
    proto: Protocol,
    state: SystemState,
    actions: Vec<(usize, Choice)>,
}

impl Script {
    fn new(params: ModelParams) -> Result<Self, ConfigError> {
        let proto = Protocol::new(params)?;
        let state = proto.initial_state();
        Ok(Self {
            proto,
            state,
            actions: Vec::new(),
        })
    }

    /// First choice that makes progress: enter from NCS, otherwise the
    /// (unique, under atomic registers) step or read.
    fn progress_choice(&self, pid: usize) -> Choice {
        self.proto
            .choices_for(&self.state, pid)
            .into_iter()
            .find(|c| !matches!(c, Choice::Stay | Choice::Crash))
            .expect("every label offers a progress step")
    }

    /// Take one step; returns the effect kind and read value.
    fn step(&mut self, pid: usize) -> Result<(ActionKind, Option<u32>), StepError> {
        let choice = self.progress_choice(pid);
        self.actions.push((pid, choice));
        let (next, effect) = self.proto.apply(&self.state, pid, choice)?;
        self.state = next;
        Ok((effect.kind, effect.value))
    }

    fn run_until(&mut self, pid: usize, target: Label) -> Result<(), StepError> {
        for _ in 0..PHASE_LIMIT {
            if self.state.procs[pid].pc == target {
                return Ok(());
            }
            self.step(pid)?;
        }
        panic!("process {} never reached {target}", pid + 1);
    }

    fn max_number(&self, pids: &[usize]) -> u32 {
        pids.iter()
            .map(|&p| self.state.number(p))
            .max()
            .unwrap_or(0)
    }
}

/// Two processes alternate through the critical section under unbounded
/// Bakery, each taking a new ticket while the other still holds one, until
/// a doorway computes a ticket above `m`.
///
/// The returned trace ends with the refused write and replays to the state
/// it was attempted from.
pub fn scripted_overflow_scenario(m: u32) -> Result<Trace, ExploreError> {
    let params = ModelParams::new(Variant::Bakery, 2, m);
    let cfg = ExploreConfig::new(params.clone());
    let mut script = Script::new(params)?;

    let run = |script: &mut Script| -> Result<(), StepError> {
        script.run_until(0, Label::Cs)?;
        let (mut holder, mut waiter) = (0, 1);
        loop {
            script.run_until(waiter, Label::L2(0))?;
            script.run_until(holder, Label::Ncs)?;
            script.run_until(holder, Label::L2(0))?;
            script.run_until(waiter, Label::Cs)?;
            std::mem::swap(&mut holder, &mut waiter);
        }
    };
    let err = run(&mut script).unwrap_err();
    debug_assert!(matches!(err, StepError::Overflow { .. }));
    let (trace, _, _) = Trace::record(&cfg, &script.actions, Some(ViolationKind::OverflowAttempt))
        .map_err(|e| ConfigError::Invalid(format!("scripted schedule failed to replay: {e}")))?;
    Ok(trace)
}

/// Output of [`l1_livelock_demo`].
#[derive(Clone, Debug)]
pub struct LivelockDemo {
    pub trace: Trace,
    /// Consecutive L1 guard trips by the slow process.
    pub slow_trips: usize,
    /// Whether the slow process ever got past L1 (never, by construction).
    pub slow_passed_guard: bool,
    /// Final state, from which a fair schedule can be tried.
    pub state: SystemState,
}

/// Three-process Bakery++ schedule: processes 1 and 2 climb their tickets to
/// `m`; the slow process 3 then scans, reads `m` and restarts its scan; the
/// fast pair drains back to zero and the cycle repeats `rounds` times.
///
/// A diagnostic of unbounded waiting at L1, not a safety violation.
pub fn l1_livelock_demo(m: u32, rounds: usize) -> Result<LivelockDemo, ExploreError> {
    let params = ModelParams::new(Variant::BakeryPP, 3, m);
    let cfg = ExploreConfig::new(params.clone());
    let mut script = Script::new(params)?;
    let slow = 2;
    let fast = [0, 1];
    let mut trips = 0;

    script.step(slow).expect("enter");
    for _ in 0..rounds {
        // climb: alternate until some fast ticket equals m
        script
            .run_until(0, Label::Cs)
            .expect("no overflow under bakery++");
        let (mut holder, mut waiter) = (0, 1);
        while script.max_number(&fast) < m {
            script
                .run_until(waiter, Label::L2(0))
                .expect("bakery++ step");
            if script.max_number(&fast) >= m {
                break;
            }
            script.run_until(holder, Label::Ncs).expect("bakery++ step");
            script
                .run_until(holder, Label::L2(0))
                .expect("bakery++ step");
            if script.max_number(&fast) >= m {
                break;
            }
            script.run_until(waiter, Label::Cs).expect("bakery++ step");
            std::mem::swap(&mut holder, &mut waiter);
        }

        // the slow process scans until it trips on a ticket >= m
        loop {
            let (kind, value) = script.step(slow).expect("scan read");
            debug_assert_eq!(kind, ActionKind::Read);
            if value.is_some_and(|v| v >= m) {
                trips += 1;
                break;
            }
            assert!(
                matches!(script.state.procs[slow].pc, Label::L1Scan(_)),
                "slow process passed the guard"
            );
        }

        // drain: lowest (ticket, pid) first
        let mut order: Vec<usize> = fast
            .iter()
            .copied()
            .filter(|&p| script.state.number(p) != 0)
            .collect();
        order.sort_by_key(|&p| (script.state.number(p), p));
        for p in order {
            script.run_until(p, Label::Ncs).expect("bakery++ step");
        }
    }

    let (trace, state, _) = Trace::record(&cfg, &script.actions, None)
        .map_err(|e| ConfigError::Invalid(format!("scripted schedule failed to replay: {e}")))?;
    let slow_passed_guard = !matches!(state.procs[slow].pc, Label::L1Scan(_));
    Ok(LivelockDemo {
        trace,
        slow_trips: trips,
        slow_passed_guard,
        state,
    })
}

/// Schedule processes round-robin from `state`, each taking its progress
/// step, and return how many steps it took `pid` to get past the L1 guard
/// (reach SetChoosing), or `None` within `max_steps`.
pub fn round_robin_until_past_guard(
    params: &ModelParams,
    state: &SystemState,
    pid: usize,
    max_steps: usize,
) -> Result<Option<usize>, ConfigError> {
    let proto = Protocol::new(params.clone())?;
    let mut script = Script {
        proto,
        state: state.clone(),
        actions: Vec::new(),
    };
    let n = params.n;
    for step in 0..max_steps {
        if script.state.procs[pid].pc == Label::SetChoosing {
            return Ok(Some(step));
        }
        if script.step(step % n).is_err() {
            return Ok(None);
        }
    }
    Ok(None)
}
