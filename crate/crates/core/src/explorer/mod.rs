//! State-space exploration of the protocol models.
//!
//! Exhaustive search ([`explore_exhaustive`]) runs breadth-first by default
//! so the first counterexample found has minimal depth. Depth-first and
//! iterative-deepening strategies visit exactly the same state set.
//! [`explore_random`] samples seeded random walks for configurations too
//! large to close.

mod random;
mod scenario;
mod search;
mod trace;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithm::{ConfigError, ModelParams, Protocol, SystemState};
use crate::register::{CellKind, RegisterId};

pub use random::{explore_random, random_walk, WalkOutcome, PRNG_NAME};
pub use scenario::{
    l1_livelock_demo, round_robin_until_past_guard, scripted_overflow_scenario, LivelockDemo,
};
pub use search::{explore_exhaustive, reachable_states};
pub use trace::{Event, ReplayError, Replayed, Trace, TraceEnd, TraceError, TRACE_FORMAT};

pub const REPORT_FORMAT: &str = "bakery-report/1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Bfs,
    Dfs,
    IterativeDeepening,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub strategy: Strategy,
    /// 0 runs to closure.
    #[serde(default)]
    pub max_depth: u32,
    #[serde(default = "default_true")]
    pub dedup: bool,
    #[serde(default = "default_state_limit")]
    pub state_limit: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub walks: u32,
    #[serde(default)]
    pub walk_length: u32,
}

fn default_true() -> bool {
    true
}

fn default_state_limit() -> u64 {
    20_000_000
}

fn default_workers() -> usize {
    1
}

impl ExploreConfig {
    pub fn new(model: ModelParams) -> Self {
        Self {
            model,
            strategy: Strategy::Bfs,
            max_depth: 0,
            dedup: true,
            state_limit: default_state_limit(),
            workers: 1,
            seed: 0,
            walks: 0,
            walk_length: 0,
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_max_depth(mut self, depth: u32) -> Self {
        self.max_depth = depth;
        self
    }

    pub fn with_walks(mut self, seed: u64, walks: u32, walk_length: u32) -> Self {
        self.seed = seed;
        self.walks = walks;
        self.walk_length = walk_length;
        self
    }

    pub fn protocol(&self) -> Result<Protocol, ConfigError> {
        Protocol::new(self.model.clone())
    }

    pub fn validate_exhaustive(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        if self.max_depth == 0 && !self.dedup {
            return Err(ConfigError::Invalid(
                "running to closure requires state deduplication".into(),
            ));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn validate_random(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        if self.walks == 0 || self.walk_length == 0 {
            return Err(ConfigError::Invalid(
                "random exploration needs a walk count and a walk length".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MutexViolation,
    OverflowAttempt,
    BoundViolation,
}

/// A safety failure together with the path that reaches it.
#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Processes involved, one-based.
    #[serde(serialize_with = "one_based_vec")]
    pub pids: Vec<usize>,
    /// The register and attempted value of an overflow.
    pub register: Option<RegisterId>,
    pub value: Option<u32>,
    /// Steps from the initial state to `state`.
    pub depth: u32,
    /// The violating state. For an overflow, the state the offending write
    /// was attempted from.
    pub state: SystemState,
    pub state_hash: String,
    #[serde(skip)]
    pub trace: Trace,
}

fn one_based_vec<S: serde::Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|p| p + 1))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Clean,
    Violated { kind: ViolationKind },
    ResourceExhausted { state_limit: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub format: &'static str,
    pub config: ExploreConfig,
    pub mode: &'static str,
    pub verdict: Verdict,
    pub violation: Option<Violation>,
    pub states_visited: u64,
    pub transitions: u64,
    pub dedup_hits: u64,
    pub max_depth_reached: u32,
    /// The whole reachable set was visited.
    pub closed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walks_completed: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prng: Option<&'static str>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl Report {
    pub fn is_clean(&self) -> bool {
        self.verdict == Verdict::Clean
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let m = &self.config.model;
        let mut out = format!(
            "{} {} n={} m={} registers={:?} crashes={} policy={:?}\n",
            self.mode, m.variant, m.n, m.m, m.registers, m.crash_budget, m.overflow_policy
        );
        out += &format!("verdict: {:?}\n", self.verdict);
        out += &format!(
            "states={} transitions={} dedup_hits={} max_depth={} closed={}\n",
            self.states_visited,
            self.transitions,
            self.dedup_hits,
            self.max_depth_reached,
            self.closed
        );
        if let Some(v) = &self.violation {
            out += &format!(
                "violation: {:?} at depth {} in {}\n",
                v.kind, v.depth, v.state
            );
        }
        out
    }
}

/// Invariant failures visible in a single state.
///
/// Overflow attempts are transition events and are reported by the
/// explorers, not here.
pub fn check_state(params: &ModelParams, s: &SystemState) -> Vec<ViolationKind> {
    let mut found = Vec::new();
    if s.in_critical_section().len() >= 2 {
        found.push(ViolationKind::MutexViolation);
    }
    let bound_ok = s.regs.cell_count() == 2 * params.n
        && s.procs.len() == params.n
        && s.regs.iter().all(|(reg, cell)| {
            let max = match reg.kind {
                CellKind::Number => params.m,
                CellKind::Choosing => 1,
            };
            cell.stable <= max && cell.in_flight.is_none_or(|v| v <= max)
        });
    if !bound_ok {
        found.push(ViolationKind::BoundViolation);
    }
    found
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Config(#[from] ConfigError),
}
