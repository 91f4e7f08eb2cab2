//! Exhaustive search: breadth-first, depth-first and iterative deepening.

use std::collections::HashMap;
use std::time::Instant;

use indexmap::IndexSet;
use rayon::prelude::*;

use super::{
    check_state, ExploreConfig, ExploreError, Report, Strategy, Verdict, Violation, ViolationKind,
    REPORT_FORMAT,
};
use crate::algorithm::{Choice, Protocol, StepError, SystemState};
use crate::explorer::Trace;

const ROOT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    parent: u32,
    pid: u8,
    choice: Choice,
}

enum Succ {
    State(usize, Choice, SystemState),
    Overflow(usize, Choice, StepError),
}

fn successors(proto: &Protocol, s: &SystemState) -> Vec<Succ> {
    proto
        .enabled_actions(s)
        .into_iter()
        .map(|(pid, choice)| match proto.apply(s, pid, choice) {
            Ok((next, _)) => Succ::State(pid, choice, next),
            Err(e @ StepError::Overflow { .. }) => Succ::Overflow(pid, choice, e),
            Err(e) => panic!("enabled action failed: {e}"),
        })
        .collect()
}

fn path_to(nodes: &[Node], mut id: u32) -> Vec<(usize, Choice)> {
    let mut path = Vec::new();
    while id != ROOT {
        let n = nodes[id as usize];
        if n.parent == ROOT {
            break;
        }
        path.push((n.pid as usize, n.choice));
        id = n.parent;
    }
    path.reverse();
    path
}

struct Stats {
    states: u64,
    transitions: u64,
    dedup_hits: u64,
    max_depth: u32,
}

/// Where the search stopped early.
enum Stop {
    Violation(Box<Violation>),
    Exhausted,
}

fn state_violation(
    cfg: &ExploreConfig,
    nodes: &[Node],
    id: u32,
    state: &SystemState,
    kind: ViolationKind,
) -> Violation {
    let path = if id == ROOT {
        Vec::new()
    } else {
        path_to(nodes, id)
    };
    let (trace, _, _) = Trace::record(cfg, &path, Some(kind)).expect("search path replays");
    let pids = match kind {
        ViolationKind::MutexViolation => state.in_critical_section(),
        _ => Vec::new(),
    };
    Violation {
        kind,
        pids,
        register: None,
        value: None,
        depth: path.len() as u32,
        state_hash: state.fingerprint(),
        state: state.clone(),
        trace,
    }
}

fn overflow_violation(
    cfg: &ExploreConfig,
    nodes: &[Node],
    parent: u32,
    state: &SystemState,
    pid: usize,
    choice: Choice,
    err: &StepError,
) -> Violation {
    let mut path = if parent == ROOT {
        Vec::new()
    } else {
        path_to(nodes, parent)
    };
    path.push((pid, choice));
    let (trace, _, _) = Trace::record(cfg, &path, Some(ViolationKind::OverflowAttempt))
        .expect("search path replays");
    let (register, value) = match *err {
        StepError::Overflow {
            register, value, ..
        } => (Some(register), Some(value)),
        _ => (None, None),
    };
    Violation {
        kind: ViolationKind::OverflowAttempt,
        pids: vec![pid],
        register,
        value,
        depth: path.len() as u32 - 1,
        state_hash: state.fingerprint(),
        state: state.clone(),
        trace,
    }
}

fn first_state_violation(cfg: &ExploreConfig, s: &SystemState) -> Option<ViolationKind> {
    check_state(&cfg.model, s).into_iter().next()
}

enum Store {
    Dedup(IndexSet<SystemState>),
    Tree(Vec<SystemState>),
}

impl Store {
    fn get(&self, id: u32) -> &SystemState {
        match self {
            Store::Dedup(set) => set.get_index(id as usize).expect("stored id"),
            Store::Tree(v) => &v[id as usize],
        }
    }

    /// Id of a newly stored state, or `None` when already present.
    fn insert(&mut self, s: SystemState) -> Option<u32> {
        match self {
            Store::Dedup(set) => {
                let (idx, fresh) = set.insert_full(s);
                fresh.then_some(idx as u32)
            }
            Store::Tree(v) => {
                v.push(s);
                Some(v.len() as u32 - 1)
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Store::Dedup(set) => set.len(),
            Store::Tree(v) => v.len(),
        }
    }
}

fn expand_level(
    proto: &Protocol,
    store: &Store,
    frontier: &[u32],
    pool: Option<&rayon::ThreadPool>,
) -> Vec<Vec<Succ>> {
    match pool {
        Some(pool) => pool.install(|| {
            frontier
                .par_iter()
                .map(|&id| successors(proto, store.get(id)))
                .collect()
        }),
        None => frontier
            .iter()
            .map(|&id| successors(proto, store.get(id)))
            .collect(),
    }
}

/// Level-synchronous BFS. Successor lists are computed (possibly in
/// parallel) per level and merged in frontier order, so results do not
/// depend on the worker count.
fn bfs(cfg: &ExploreConfig, proto: &Protocol, st: &mut Stats) -> (Option<Stop>, bool) {
    let init = proto.initial_state();
    let mut store = if cfg.dedup {
        Store::Dedup(IndexSet::new())
    } else {
        Store::Tree(Vec::new())
    };
    let mut nodes: Vec<Node> = Vec::new();
    if let Some(kind) = first_state_violation(cfg, &init) {
        st.states = 1;
        return (
            Some(Stop::Violation(Box::new(state_violation(
                cfg, &nodes, ROOT, &init, kind,
            )))),
            false,
        );
    }
    store.insert(init);
    nodes.push(Node {
        parent: ROOT,
        pid: 0,
        choice: Choice::Stay,
    });
    st.states = 1;

    let pool = (cfg.workers > 1).then(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .expect("thread pool")
    });

    let mut frontier: Vec<u32> = vec![0];
    let mut depth = 0u32;
    loop {
        if frontier.is_empty() {
            return (None, true);
        }
        if cfg.max_depth > 0 && depth >= cfg.max_depth {
            let closed = match &store {
                Store::Dedup(set) => frontier.iter().all(|&id| {
                    successors(proto, store.get(id))
                        .iter()
                        .all(|succ| match succ {
                            Succ::State(_, _, ns) => set.contains(ns),
                            Succ::Overflow(..) => false,
                        })
                }),
                Store::Tree(_) => false,
            };
            return (None, closed);
        }
        let expansions = expand_level(proto, &store, &frontier, pool.as_ref());
        let mut next = Vec::new();
        for (&parent, succs) in frontier.iter().zip(expansions) {
            for succ in succs {
                st.transitions += 1;
                match succ {
                    Succ::Overflow(pid, choice, err) => {
                        let pre = store.get(parent);
                        let v = overflow_violation(cfg, &nodes, parent, pre, pid, choice, &err);
                        return (Some(Stop::Violation(Box::new(v))), false);
                    }
                    Succ::State(pid, choice, s) => {
                        let violation = first_state_violation(cfg, &s);
                        let Some(id) = store.insert(s) else {
                            st.dedup_hits += 1;
                            continue;
                        };
                        nodes.push(Node {
                            parent,
                            pid: pid as u8,
                            choice,
                        });
                        st.states += 1;
                        st.max_depth = depth + 1;
                        if let Some(kind) = violation {
                            let v = state_violation(cfg, &nodes, id, store.get(id), kind);
                            return (Some(Stop::Violation(Box::new(v))), false);
                        }
                        if store.len() as u64 > cfg.state_limit {
                            return (Some(Stop::Exhausted), false);
                        }
                        next.push(id);
                    }
                }
            }
        }
        frontier = next;
        depth += 1;
    }
}

/// Depth-first search with depth-aware deduplication: a state reached again
/// along a shorter path is re-expanded, so a depth bound prunes exactly the
/// same set as BFS. Returns whether any unseen state lay beyond the bound.
fn dfs(
    cfg: &ExploreConfig,
    proto: &Protocol,
    limit: u32,
    st: &mut Stats,
) -> (Option<Stop>, bool, bool) {
    let init = proto.initial_state();
    let mut nodes: Vec<Node> = Vec::new();
    if let Some(kind) = first_state_violation(cfg, &init) {
        st.states = 1;
        return (
            Some(Stop::Violation(Box::new(state_violation(
                cfg, &nodes, ROOT, &init, kind,
            )))),
            false,
            false,
        );
    }
    let mut seen: HashMap<SystemState, (u32, u32)> = HashMap::new();
    nodes.push(Node {
        parent: ROOT,
        pid: 0,
        choice: Choice::Stay,
    });
    seen.insert(init.clone(), (0, 0));
    st.states = 1;
    let mut stack: Vec<(SystemState, u32, u32)> = vec![(init, 0, 0)];
    let mut cut = false;

    while let Some((s, id, depth)) = stack.pop() {
        if limit > 0 && depth >= limit {
            if !cut {
                cut = successors(proto, &s).iter().any(|succ| match succ {
                    Succ::State(_, _, ns) => seen.get(ns).is_none_or(|&(_, d)| d > limit),
                    Succ::Overflow(..) => true,
                });
            }
            continue;
        }
        let succs = successors(proto, &s);
        let mut push = Vec::new();
        for succ in succs {
            st.transitions += 1;
            match succ {
                Succ::Overflow(pid, choice, err) => {
                    let v = overflow_violation(cfg, &nodes, id, &s, pid, choice, &err);
                    return (Some(Stop::Violation(Box::new(v))), false, cut);
                }
                Succ::State(pid, choice, ns) => {
                    let nd = depth + 1;
                    let node = Node {
                        parent: id,
                        pid: pid as u8,
                        choice,
                    };
                    match seen.get_mut(&ns) {
                        Some((nid, d)) => {
                            if limit > 0 && nd < *d {
                                *d = nd;
                                nodes[*nid as usize] = node;
                                push.push((ns, *nid, nd));
                            } else {
                                st.dedup_hits += 1;
                            }
                        }
                        None => {
                            let nid = nodes.len() as u32;
                            nodes.push(node);
                            st.states += 1;
                            st.max_depth = st.max_depth.max(nd);
                            if let Some(kind) = first_state_violation(cfg, &ns) {
                                let v = state_violation(cfg, &nodes, nid, &ns, kind);
                                return (Some(Stop::Violation(Box::new(v))), false, cut);
                            }
                            if st.states > cfg.state_limit {
                                return (Some(Stop::Exhausted), false, cut);
                            }
                            seen.insert(ns.clone(), (nid, nd));
                            push.push((ns, nid, nd));
                        }
                    }
                }
            }
        }
        // lowest (pid, choice) explored first
        stack.extend(push.into_iter().rev());
    }
    let closed = !cut;
    (None, closed, cut)
}

/// Exhaustive exploration under `cfg`.
pub fn explore_exhaustive(cfg: &ExploreConfig) -> Result<Report, ExploreError> {
    cfg.validate_exhaustive()?;
    let proto = cfg.protocol()?;
    let start = Instant::now();
    let mut st = Stats {
        states: 0,
        transitions: 0,
        dedup_hits: 0,
        max_depth: 0,
    };
    let (stop, closed) = match cfg.strategy {
        Strategy::Bfs => bfs(cfg, &proto, &mut st),
        Strategy::Dfs => {
            let (stop, closed, _) = dfs(cfg, &proto, cfg.max_depth, &mut st);
            (stop, closed)
        }
        Strategy::IterativeDeepening => {
            let mut limit = 1;
            loop {
                st = Stats {
                    states: 0,
                    transitions: 0,
                    dedup_hits: 0,
                    max_depth: 0,
                };
                let (stop, _, cut) = dfs(cfg, &proto, limit, &mut st);
                if stop.is_some() {
                    break (stop, false);
                }
                if !cut {
                    break (None, true);
                }
                if cfg.max_depth > 0 && limit >= cfg.max_depth {
                    break (None, false);
                }
                limit += 1;
            }
        }
    };
    let (verdict, violation) = match stop {
        None => (Verdict::Clean, None),
        Some(Stop::Exhausted) => (
            Verdict::ResourceExhausted {
                state_limit: cfg.state_limit,
            },
            None,
        ),
        Some(Stop::Violation(v)) => (Verdict::Violated { kind: v.kind }, Some(*v)),
    };
    Ok(Report {
        format: REPORT_FORMAT,
        config: cfg.clone(),
        mode: "exhaustive",
        verdict,
        violation,
        states_visited: st.states,
        transitions: st.transitions,
        dedup_hits: st.dedup_hits,
        max_depth_reached: st.max_depth,
        closed,
        walks_completed: None,
        prng: None,
        elapsed: start.elapsed(),
    })
}

/// Every state reachable within `cfg.max_depth` (or the closed set), in BFS
/// discovery order. Violations are not checked.
pub fn reachable_states(cfg: &ExploreConfig) -> Result<Vec<SystemState>, ExploreError> {
    cfg.model.validate()?;
    let proto = cfg.protocol()?;
    let mut set = IndexSet::new();
    set.insert(proto.initial_state());
    let mut level = 0..1;
    let mut depth = 0;
    while !level.is_empty() && (cfg.max_depth == 0 || depth < cfg.max_depth) {
        let end = set.len();
        for id in level {
            let s = set.get_index(id).unwrap().clone();
            for succ in successors(&proto, &s) {
                if let Succ::State(_, _, ns) = succ {
                    set.insert(ns);
                }
                if set.len() as u64 > cfg.state_limit {
                    return Ok(set.into_iter().collect());
                }
            }
        }
        level = end..set.len();
        depth += 1;
    }
    Ok(set.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{ModelParams, Variant};

    fn cfg(variant: Variant, n: usize, m: u32) -> ExploreConfig {
        ExploreConfig::new(ModelParams::new(variant, n, m))
    }

    #[test]
    fn solo_bakerypp_is_clean() {
        for m in 1..=4 {
            let r = explore_exhaustive(&cfg(Variant::BakeryPP, 1, m)).unwrap();
            assert!(r.is_clean() && r.closed, "{r:?}");
        }
    }

    #[test]
    fn bakery_overflows() {
        let r = explore_exhaustive(&cfg(Variant::Bakery, 2, 3)).unwrap();
        assert_eq!(
            r.verdict,
            Verdict::Violated {
                kind: ViolationKind::OverflowAttempt
            }
        );
        let v = r.violation.unwrap();
        assert_eq!(v.value, Some(4));
        let replayed = v.trace.replay().unwrap();
        assert_eq!(replayed.state_hash(), v.state_hash);
        assert!(replayed.overflow.is_some());
    }

    #[test]
    fn strategies_agree_on_small_model() {
        let base = cfg(Variant::BakeryPP, 2, 2);
        let bfs = explore_exhaustive(&base).unwrap();
        let dfs = explore_exhaustive(&base.clone().with_strategy(Strategy::Dfs)).unwrap();
        let id =
            explore_exhaustive(&base.clone().with_strategy(Strategy::IterativeDeepening)).unwrap();
        assert!(bfs.closed && dfs.closed && id.closed);
        assert_eq!(bfs.states_visited, dfs.states_visited);
        assert_eq!(bfs.states_visited, id.states_visited);
        assert_eq!(
            bfs.states_visited,
            reachable_states(&base).unwrap().len() as u64
        );
    }

    #[test]
    fn depth_bound_agrees_across_strategies() {
        for depth in [1, 5, 17] {
            let base = cfg(Variant::BakeryPP, 2, 2).with_max_depth(depth);
            let bfs = explore_exhaustive(&base).unwrap();
            let dfs = explore_exhaustive(&base.clone().with_strategy(Strategy::Dfs)).unwrap();
            assert_eq!(bfs.states_visited, dfs.states_visited, "depth {depth}");
            assert!(!bfs.closed);
        }
    }

    #[test]
    fn workers_do_not_change_results() {
        let base = cfg(Variant::BakeryPP, 2, 3);
        let mut par = base.clone();
        par.workers = 3;
        let a = explore_exhaustive(&base).unwrap();
        let b = explore_exhaustive(&par).unwrap();
        assert_eq!(a.states_visited, b.states_visited);
        assert_eq!(a.transitions, b.transitions);
    }

    #[test]
    fn state_limit_is_explicit() {
        let mut c = cfg(Variant::BakeryPP, 2, 3);
        c.state_limit = 50;
        let r = explore_exhaustive(&c).unwrap();
        assert_eq!(r.verdict, Verdict::ResourceExhausted { state_limit: 50 });
    }

    #[test]
    fn tree_search_without_dedup() {
        let mut c = cfg(Variant::BakeryPP, 1, 1).with_max_depth(6);
        c.dedup = false;
        let r = explore_exhaustive(&c).unwrap();
        assert!(r.is_clean());
        // each level of the unfolded tree is at least as wide as the last
        assert!(r.states_visited > 7);
        assert_eq!(r.dedup_hits, 0);
    }
}
