//! A Bakery++ spin lock over real shared memory, and a stress harness.
//!
//! A [`LockGroup`] owns `2N` cells. Each participant gets exactly one
//! [`Handle`], and a handle only ever writes the two cells of its own slot.
//! Every cell access is a sequentially consistent atomic load or store;
//! no read-modify-write instruction is used anywhere in the protocol.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicU8, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::algorithm::{bound_check, lex_less, Branch};
use crate::register::{CellKind, RegisterId};

/// Default ticket bound. Correctness does not depend on it; small values
/// only make the guard and reset paths fire more often.
pub const DEFAULT_LIMIT: u32 = u32::MAX - 1;

const SC: Ordering = Ordering::SeqCst;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LockError {
    #[error("a lock group needs at least one slot")]
    NoSlots,
    #[error("ticket limit must be between 1 and {}", u32::MAX - 1)]
    BadLimit,
    #[error("{threads} threads requested for a group of {slots} slots")]
    TooManyThreads { threads: usize, slots: usize },
}

/// Where a participant currently is in the protocol. Diagnostic only: the
/// protocol never reads it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Phase {
    Idle = 0,
    Guard = 1,
    Doorway = 2,
    WaitChoosing = 3,
    WaitTicket = 4,
    Critical = 5,
}

impl Phase {
    fn from_u8(v: u8) -> Self {
        match v {
            1 => Phase::Guard,
            2 => Phase::Doorway,
            3 => Phase::WaitChoosing,
            4 => Phase::WaitTicket,
            5 => Phase::Critical,
            _ => Phase::Idle,
        }
    }
}

pub struct LockGroup {
    limit: u32,
    number: Box<[AtomicU32]>,
    choosing: Box<[AtomicU32]>,
    phase: Box<[AtomicU8]>,
}

impl std::fmt::Debug for LockGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LockGroup")
            .field("limit", &self.limit)
            .field("number", &self.numbers())
            .field("choosing", &self.choosings())
            .finish()
    }
}

impl LockGroup {
    /// A group of `slots` participants with ticket bound `limit`, and one
    /// handle per slot.
    pub fn with_handles(slots: usize, limit: u32) -> Result<(Arc<Self>, Vec<Handle>), LockError> {
        if slots == 0 {
            return Err(LockError::NoSlots);
        }
        if limit == 0 || limit == u32::MAX {
            return Err(LockError::BadLimit);
        }
        let cells = |n: usize| (0..n).map(|_| AtomicU32::new(0)).collect::<Box<[_]>>();
        let group = Arc::new(Self {
            limit,
            number: cells(slots),
            choosing: cells(slots),
            phase: (0..slots).map(|_| AtomicU8::new(0)).collect(),
        });
        let handles = (0..slots)
            .map(|slot| Handle {
                group: Arc::clone(&group),
                slot,
                stats: HandleStats::default(),
            })
            .collect();
        Ok((group, handles))
    }

    pub fn slots(&self) -> usize {
        self.number.len()
    }

    pub fn limit(&self) -> u32 {
        self.limit
    }

    /// Shared cells in the group; always twice the slot count.
    pub fn cell_count(&self) -> usize {
        self.number.len() + self.choosing.len()
    }

    pub fn numbers(&self) -> Vec<u32> {
        self.number.iter().map(|c| c.load(SC)).collect()
    }

    pub fn choosings(&self) -> Vec<u32> {
        self.choosing.iter().map(|c| c.load(SC)).collect()
    }

    pub fn phases(&self) -> Vec<Phase> {
        self.phase
            .iter()
            .map(|p| Phase::from_u8(p.load(Ordering::Relaxed)))
            .collect()
    }

    fn cell(&self, reg: RegisterId) -> &AtomicU32 {
        match reg.kind {
            CellKind::Number => &self.number[reg.owner],
            CellKind::Choosing => &self.choosing[reg.owner],
        }
    }

    fn load(&self, reg: RegisterId) -> u32 {
        self.cell(reg).load(SC)
    }

    fn store(&self, writer: usize, reg: RegisterId, value: u32) {
        assert_eq!(reg.owner, writer, "slot {writer} wrote {reg}");
        let max = match reg.kind {
            CellKind::Number => self.limit,
            CellKind::Choosing => 1,
        };
        assert!(
            value <= max,
            "slot {writer} stored {value} into {reg} (limit {max})"
        );
        self.cell(reg).store(value, SC);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct HandleStats {
    pub acquisitions: u64,
    /// Doorway passes that read a maximum at or above the limit.
    pub resets: u64,
    /// Guard scans that found a ticket at or above the limit.
    pub l1_trips: u64,
    /// Largest ticket value this participant read or stored.
    pub max_ticket: u32,
}

/// Exclusive right to act as one slot of a group.
///
/// Not `Clone`; `acquire` takes `&mut self`, so a handle can neither
/// re-enter nor release a lock it does not hold.
#[derive(Debug)]
pub struct Handle {
    group: Arc<LockGroup>,
    slot: usize,
    stats: HandleStats,
}

struct Backoff(u32);

impl Backoff {
    fn snooze(&mut self) {
        if self.0 < 6 {
            for _ in 0..(1u32 << self.0) {
                std::hint::spin_loop();
            }
            self.0 += 1;
        } else {
            thread::yield_now();
        }
    }
}

impl Handle {
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn group(&self) -> &Arc<LockGroup> {
        &self.group
    }

    pub fn stats(&self) -> HandleStats {
        self.stats
    }

    fn set_phase(&self, p: Phase) {
        self.group.phase[self.slot].store(p as u8, Ordering::Relaxed);
    }

    fn saw(&mut self, v: u32) {
        self.stats.max_ticket = self.stats.max_ticket.max(v);
    }

    /// Spin until this slot may enter its critical section.
    pub fn acquire(&mut self) -> LockGuard<'_> {
        let never = AtomicBool::new(false);
        self.acquire_cancellable(&never).expect("not cancelled")
    }

    /// As [`Self::acquire`], but gives up once `cancel` is set. A cancelled
    /// attempt zeroes this slot's cells before returning, like a crash
    /// followed by a restart in the noncritical section.
    pub fn acquire_cancellable(&mut self, cancel: &AtomicBool) -> Option<LockGuard<'_>> {
        if self.enter(cancel) {
            self.stats.acquisitions += 1;
            self.set_phase(Phase::Critical);
            Some(LockGuard { handle: self })
        } else {
            let g = Arc::clone(&self.group);
            g.store(self.slot, RegisterId::number(self.slot), 0);
            g.store(self.slot, RegisterId::choosing(self.slot), 0);
            self.set_phase(Phase::Idle);
            None
        }
    }

    fn enter(&mut self, cancel: &AtomicBool) -> bool {
        let g = Arc::clone(&self.group);
        let (i, n, m) = (self.slot, g.slots(), g.limit);
        let ticket = 'doorway: loop {
            // L1: wait until no ticket has reached the limit
            self.set_phase(Phase::Guard);
            let mut backoff = Backoff(0);
            loop {
                let mut tripped = false;
                for q in 0..n {
                    let v = g.load(RegisterId::number(q));
                    self.saw(v);
                    if v >= m {
                        tripped = true;
                        break;
                    }
                }
                if !tripped {
                    break;
                }
                self.stats.l1_trips += 1;
                if cancel.load(Ordering::Relaxed) {
                    return false;
                }
                backoff.snooze();
            }

            self.set_phase(Phase::Doorway);
            g.store(i, RegisterId::choosing(i), 1);
            let mut max = 0;
            for k in 0..n {
                let v = g.load(RegisterId::number(k));
                self.saw(v);
                max = max.max(v);
            }
            g.store(i, RegisterId::number(i), max);
            match bound_check(max, m) {
                Branch::Reset => {
                    g.store(i, RegisterId::number(i), 0);
                    g.store(i, RegisterId::choosing(i), 0);
                    self.stats.resets += 1;
                    continue 'doorway;
                }
                Branch::Increment => {
                    g.store(i, RegisterId::number(i), max + 1);
                    self.saw(max + 1);
                    g.store(i, RegisterId::choosing(i), 0);
                    break max + 1;
                }
            }
        };

        for j in 0..n {
            self.set_phase(Phase::WaitChoosing);
            let mut backoff = Backoff(0);
            while g.load(RegisterId::choosing(j)) != 0 {
                if cancel.load(Ordering::Relaxed) {
                    return false;
                }
                backoff.snooze();
            }
            self.set_phase(Phase::WaitTicket);
            let mut backoff = Backoff(0);
            loop {
                let v = g.load(RegisterId::number(j));
                self.saw(v);
                if v == 0 || !lex_less((v, j), (ticket, i)) {
                    break;
                }
                if cancel.load(Ordering::Relaxed) {
                    return false;
                }
                backoff.snooze();
            }
        }
        true
    }

    fn release(&mut self) {
        self.group
            .store(self.slot, RegisterId::number(self.slot), 0);
        self.set_phase(Phase::Idle);
    }
}

/// Held critical section; dropping it releases the lock.
#[derive(Debug)]
pub struct LockGuard<'a> {
    handle: &'a mut Handle,
}

impl LockGuard<'_> {
    /// This slot's current ticket.
    pub fn ticket(&self) -> u32 {
        self.handle.group.load(RegisterId::number(self.handle.slot))
    }

    /// Explicit release; same as dropping the guard.
    pub fn release(self) {}
}

impl Drop for LockGuard<'_> {
    fn drop(&mut self) {
        self.handle.release();
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StressConfig {
    pub threads: usize,
    pub iterations: u64,
    pub limit: u32,
    /// Group size; defaults to `threads`.
    pub slots: Option<usize>,
    /// Spin iterations inside each critical section.
    pub work: u32,
    #[serde(skip)]
    pub timeout: Duration,
}

impl StressConfig {
    pub fn new(threads: usize, iterations: u64, limit: u32) -> Self {
        Self {
            threads,
            iterations,
            limit,
            slots: None,
            work: 16,
            timeout: Duration::from_secs(300),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StressReport {
    pub threads: usize,
    pub iterations: u64,
    pub limit: u32,
    pub cells: usize,
    pub completed: u64,
    /// Entries that found another thread inside, plus lost counter updates.
    pub mutex_violations: u64,
    pub max_ticket: u32,
    /// Largest cell value seen by the background observer.
    pub max_observed: u32,
    pub resets: u64,
    pub l1_trips: u64,
    pub timed_out: bool,
    /// Per-slot phase at the time the watchdog fired.
    pub stuck_phases: Vec<Phase>,
    pub per_thread: Vec<HandleStats>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.mutex_violations == 0
            && !self.timed_out
            && self.max_ticket <= self.limit
            && self.max_observed <= self.limit
            && self.completed == self.threads as u64 * self.iterations
    }
}

/// Run `threads` participants, each acquiring and releasing `iterations`
/// times around an unprotected counter whose corruption reveals any
/// overlap of critical sections.
pub fn stress(cfg: &StressConfig) -> Result<StressReport, LockError> {
    let slots = cfg.slots.unwrap_or(cfg.threads);
    if cfg.threads == 0 || cfg.threads > slots {
        return Err(LockError::TooManyThreads {
            threads: cfg.threads,
            slots,
        });
    }
    let (group, handles) = LockGroup::with_handles(slots, cfg.limit)?;
    let start = Instant::now();

    let occupancy = Arc::new(AtomicU32::new(0));
    let counter = Arc::new(AtomicU64::new(0));
    let violations = Arc::new(AtomicU64::new(0));
    let progress = Arc::new(AtomicU64::new(0));
    let cancel = Arc::new(AtomicBool::new(false));
    let done = Arc::new(AtomicBool::new(false));

    let observer = {
        let group = Arc::clone(&group);
        let done = Arc::clone(&done);
        thread::spawn(move || {
            let mut max = 0;
            while !done.load(Ordering::Relaxed) {
                for v in group.numbers() {
                    max = max.max(v);
                }
                thread::yield_now();
            }
            max
        })
    };

    let workers: Vec<_> = handles
        .into_iter()
        .take(cfg.threads)
        .map(|mut h| {
            let occupancy = Arc::clone(&occupancy);
            let counter = Arc::clone(&counter);
            let violations = Arc::clone(&violations);
            let progress = Arc::clone(&progress);
            let cancel = Arc::clone(&cancel);
            let (iters, work) = (cfg.iterations, cfg.work);
            thread::spawn(move || {
                for _ in 0..iters {
                    let Some(guard) = h.acquire_cancellable(&cancel) else {
                        break;
                    };
                    // plain load/store pairs; overlapping sections corrupt them
                    if occupancy.load(Ordering::Relaxed) != 0 {
                        violations.fetch_add(1, Ordering::Relaxed);
                    }
                    occupancy.store(1, Ordering::Relaxed);
                    let c = counter.load(Ordering::Relaxed);
                    for _ in 0..work {
                        std::hint::spin_loop();
                    }
                    counter.store(c + 1, Ordering::Relaxed);
                    occupancy.store(0, Ordering::Relaxed);
                    drop(guard);
                    progress.fetch_add(1, Ordering::Relaxed);
                }
                h.stats()
            })
        })
        .collect();

    let mut timed_out = false;
    let mut stuck_phases = Vec::new();
    while !workers.iter().all(|w| w.is_finished()) {
        if start.elapsed() > cfg.timeout {
            timed_out = true;
            stuck_phases = group.phases();
            cancel.store(true, Ordering::Relaxed);
            break;
        }
        thread::sleep(Duration::from_millis(5));
    }
    let per_thread: Vec<HandleStats> = workers
        .into_iter()
        .map(|w| w.join().expect("worker panicked"))
        .collect();
    done.store(true, Ordering::Relaxed);
    let max_observed = observer.join().expect("observer panicked");

    let completed = progress.load(SC);
    let lost = completed.saturating_sub(counter.load(SC));
    Ok(StressReport {
        threads: cfg.threads,
        iterations: cfg.iterations,
        limit: cfg.limit,
        cells: group.cell_count(),
        completed,
        mutex_violations: violations.load(SC) + lost,
        max_ticket: per_thread.iter().map(|s| s.max_ticket).max().unwrap_or(0),
        max_observed,
        resets: per_thread.iter().map(|s| s.resets).sum(),
        l1_trips: per_thread.iter().map(|s| s.l1_trips).sum(),
        timed_out,
        stuck_phases,
        per_thread,
        elapsed: start.elapsed(),
    })
}
