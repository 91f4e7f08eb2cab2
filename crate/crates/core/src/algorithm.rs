//! Micro-step semantics of the Bakery lock and its bounded-register
//! variant Bakery++.
//!
//! Every shared-register access is one scheduler step; local arithmetic and
//! comparisons ride along with the access they follow. In safe-register
//! mode each write takes two steps (begin, then commit), and the process
//! stays at the same label until the commit.
//!
//! Process indices are zero-based internally and printed one-based.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::register::{
    CellKind, OverflowPolicy, ReadModel, RegisterError, RegisterFile, RegisterId, RegisterModelKind,
};

/// Largest process count the state encoding supports.
pub const MAX_PROCS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "bakery")]
    Bakery,
    #[serde(rename = "bakerypp")]
    BakeryPP,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Bakery => "bakery",
            Variant::BakeryPP => "bakerypp",
        })
    }
}

/// Order in which the doorway gathers the `maximum` reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxOrder {
    #[default]
    Ascending,
    /// Any unread index may come next. Multiplies the state space by up to
    /// `N!` orderings per doorway.
    Any,
}

/// The immutable constants of one model instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    /// Largest value a number register can hold.
    pub m: u32,
    pub variant: Variant,
    pub registers: RegisterModelKind,
    #[serde(default)]
    pub flicker_above_limit: bool,
    /// Crashes each process may suffer.
    #[serde(default)]
    pub crash_budget: u8,
    #[serde(default)]
    pub overflow_policy: OverflowPolicy,
    #[serde(default)]
    pub max_order: MaxOrder,
}

impl ModelParams {
    pub fn new(variant: Variant, n: usize, m: u32) -> Self {
        Self {
            n,
            m,
            variant,
            registers: RegisterModelKind::Atomic,
            flicker_above_limit: false,
            crash_budget: 0,
            overflow_policy: OverflowPolicy::Trap,
            max_order: MaxOrder::Ascending,
        }
    }

    pub fn with_registers(mut self, registers: RegisterModelKind) -> Self {
        self.registers = registers;
        self
    }

    pub fn with_crashes(mut self, budget: u8) -> Self {
        self.crash_budget = budget;
        self
    }

    pub fn with_policy(mut self, policy: OverflowPolicy) -> Self {
        self.overflow_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 1 {
            return Err(ConfigError::NoProcesses);
        }
        if self.n > MAX_PROCS {
            return Err(ConfigError::TooManyProcesses {
                n: self.n,
                max: MAX_PROCS,
            });
        }
        if self.m < 1 {
            return Err(ConfigError::ZeroLimit);
        }
        if self.m == u32::MAX {
            return Err(ConfigError::LimitTooLarge);
        }
        Ok(())
    }

    pub fn read_model(&self) -> ReadModel {
        ReadModel {
            kind: self.registers,
            limit: self.m,
            flicker_above_limit: self.flicker_above_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("need at least one process")]
    NoProcesses,
    #[error("{n} processes requested, at most {max} supported")]
    TooManyProcesses { n: usize, max: usize },
    #[error("register limit M must be at least 1")]
    ZeroLimit,
    #[error("register limit M too large")]
    LimitTooLarge,
    #[error("{0}")]
    Invalid(String),
}

/// Program counter. Indices are zero-based process indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Ncs,
    /// Bakery++ guard: reading `number[q]`.
    L1Scan(u8),
    SetChoosing,
    /// Gathering the maximum; the payload counts reads done so far.
    MaxRead(u8),
    /// Bakery writes `1 + max`; Bakery++ writes `max`.
    MaxWrite,
    /// Bakery++ only: writes `0` (reset branch) or `max + 1`.
    BoundCheck,
    /// Bakery++ reset branch: `choosing[i] := 0`, then back to L1.
    ResetChoosing,
    ClearChoosing,
    L2(u8),
    L3(u8),
    Cs,
    ExitWrite,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Label::Ncs => f.write_str("NCS"),
            Label::L1Scan(q) => write!(f, "L1({})", q as usize + 1),
            Label::SetChoosing => f.write_str("SetChoosing"),
            Label::MaxRead(k) => write!(f, "MaxRead({})", k as usize + 1),
            Label::MaxWrite => f.write_str("MaxWrite"),
            Label::BoundCheck => f.write_str("BoundCheck"),
            Label::ResetChoosing => f.write_str("ResetChoosing"),
            Label::ClearChoosing => f.write_str("ClearChoosing"),
            Label::L2(j) => write!(f, "L2({})", j as usize + 1),
            Label::L3(j) => write!(f, "L3({})", j as usize + 1),
            Label::Cs => f.write_str("CS"),
            Label::ExitWrite => f.write_str("ExitWrite"),
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((name, rest)) = s.split_once('(') {
            let idx = rest
                .strip_suffix(')')
                .and_then(|n| n.parse::<u16>().ok())
                .filter(|&n| (1..=MAX_PROCS as u16).contains(&n))
                .ok_or_else(|| format!("bad label index in `{s}`"))?;
            let idx = (idx - 1) as u8;
            return match name {
                "L1" => Ok(Label::L1Scan(idx)),
                "MaxRead" => Ok(Label::MaxRead(idx)),
                "L2" => Ok(Label::L2(idx)),
                "L3" => Ok(Label::L3(idx)),
                _ => Err(format!("unknown label `{s}`")),
            };
        }
        Ok(match s {
            "NCS" => Label::Ncs,
            "SetChoosing" => Label::SetChoosing,
            "MaxWrite" => Label::MaxWrite,
            "BoundCheck" => Label::BoundCheck,
            "ResetChoosing" => Label::ResetChoosing,
            "ClearChoosing" => Label::ClearChoosing,
            "CS" => Label::Cs,
            "ExitWrite" => Label::ExitWrite,
            _ => return Err(format!("unknown label `{s}`")),
        })
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Label);
string_serde!(Choice);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessLocal {
    pub pc: Label,
    /// Running maximum; meaningful from the first MaxRead up to BoundCheck.
    pub local_max: u32,
    /// Indices already folded into `local_max`.
    pub read_mask: u32,
    pub crashes_left: u8,
}

impl ProcessLocal {
    fn idle(crashes_left: u8) -> Self {
        Self {
            pc: Label::Ncs,
            local_max: 0,
            read_mask: 0,
            crashes_left,
        }
    }
}

/// One global configuration: every process's locals and the shared cells.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemState {
    pub procs: Vec<ProcessLocal>,
    pub regs: RegisterFile,
}

impl SystemState {
    pub fn n(&self) -> usize {
        self.procs.len()
    }

    pub fn number(&self, pid: usize) -> u32 {
        self.regs.value(RegisterId::number(pid))
    }

    pub fn choosing(&self, pid: usize) -> u32 {
        self.regs.value(RegisterId::choosing(pid))
    }

    /// Processes currently at the critical section.
    pub fn in_critical_section(&self) -> Vec<usize> {
        self.procs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.pc == Label::Cs)
            .map(|(i, _)| i)
            .collect()
    }

    /// Fixed-width little-endian encoding; two states are equal iff their
    /// encodings are.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.procs.len() * 11 + self.regs.cell_count() * 9);
        out.extend_from_slice(&(self.procs.len() as u32).to_le_bytes());
        for p in &self.procs {
            let (tag, arg) = match p.pc {
                Label::Ncs => (0u8, 0u8),
                Label::L1Scan(q) => (1, q),
                Label::SetChoosing => (2, 0),
                Label::MaxRead(k) => (3, k),
                Label::MaxWrite => (4, 0),
                Label::BoundCheck => (5, 0),
                Label::ResetChoosing => (6, 0),
                Label::ClearChoosing => (7, 0),
                Label::L2(j) => (8, j),
                Label::L3(j) => (9, j),
                Label::Cs => (10, 0),
                Label::ExitWrite => (11, 0),
            };
            out.push(tag);
            out.push(arg);
            out.extend_from_slice(&p.local_max.to_le_bytes());
            out.extend_from_slice(&p.read_mask.to_le_bytes());
            out.push(p.crashes_left);
        }
        for cell in self.regs.cells() {
            out.extend_from_slice(&cell.stable.to_le_bytes());
            match cell.in_flight {
                Some(v) => {
                    out.push(1);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                None => {
                    out.push(0);
                    out.extend_from_slice(&0u32.to_le_bytes());
                }
            }
        }
        out
    }

    /// Hex SHA-256 of [`Self::canonical_bytes`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }

    /// Same state with pending writes dropped.
    pub fn stable_projection(&self) -> Self {
        Self {
            procs: self.procs.clone(),
            regs: self.regs.stable_projection(),
        }
    }
}

impl Serialize for SystemState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;

        #[derive(Serialize)]
        struct ProcView {
            pc: Label,
            local_max: u32,
            crashes_left: u8,
        }

        let of_kind = |kind: CellKind| -> Vec<u32> {
            self.regs
                .iter()
                .filter(|(r, _)| r.kind == kind)
                .map(|(_, c)| c.stable)
                .collect()
        };
        let in_flight: Vec<(RegisterId, u32)> = self
            .regs
            .iter()
            .filter_map(|(r, c)| c.in_flight.map(|v| (r, v)))
            .collect();
        let procs: Vec<ProcView> = self
            .procs
            .iter()
            .map(|p| ProcView {
                pc: p.pc,
                local_max: p.local_max,
                crashes_left: p.crashes_left,
            })
            .collect();
        let mut st = s.serialize_struct("SystemState", 4)?;
        st.serialize_field("procs", &procs)?;
        st.serialize_field("number", &of_kind(CellKind::Number))?;
        st.serialize_field("choosing", &of_kind(CellKind::Choosing))?;
        st.serialize_field("in_flight", &in_flight)?;
        st.end()
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.procs.iter().enumerate() {
            write!(f, "p{}={} ", i + 1, p.pc)?;
        }
        let show = |f: &mut fmt::Formatter<'_>, name: &str, kind: CellKind| -> fmt::Result {
            write!(f, "{name}=[")?;
            let cells = self.regs.iter().filter(|(r, _)| r.kind == kind);
            for (idx, (_, cell)) in cells.enumerate() {
                if idx > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", cell.stable)?;
                if let Some(v) = cell.in_flight {
                    write!(f, "<-{v}")?;
                }
            }
            f.write_str("]")
        };
        show(f, "number", CellKind::Number)?;
        f.write_str(" ")?;
        show(f, "choosing", CellKind::Choosing)
    }
}

/// Nondeterministic outcome of one scheduler step for a chosen process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Choice {
    /// Remain in the noncritical section.
    Stay,
    /// Leave the noncritical section for the doorway.
    Enter,
    /// The single deterministic step at the current label.
    Step,
    /// A read of the cell owned by `index` that returned `value`.
    Read {
        index: u8,
        value: u32,
    },
    Crash,
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Choice::Stay => f.write_str("stay"),
            Choice::Enter => f.write_str("enter"),
            Choice::Step => f.write_str("step"),
            Choice::Crash => f.write_str("crash"),
            Choice::Read { index, value } => write!(f, "read({})={value}", index as usize + 1),
        }
    }
}

impl FromStr for Choice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stay" => return Ok(Choice::Stay),
            "enter" => return Ok(Choice::Enter),
            "step" => return Ok(Choice::Step),
            "crash" => return Ok(Choice::Crash),
            _ => {}
        }
        let bad = || format!("unknown choice `{s}`");
        let rest = s.strip_prefix("read(").ok_or_else(bad)?;
        let (idx, value) = rest.split_once(")=").ok_or_else(bad)?;
        let idx: u16 = idx.parse().map_err(|_| bad())?;
        if !(1..=MAX_PROCS as u16).contains(&idx) {
            return Err(bad());
        }
        let value: u32 = value.parse().map_err(|_| bad())?;
        Ok(Choice::Read {
            index: (idx - 1) as u8,
            value,
        })
    }
}

/// What kind of micro-step was taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Stay,
    Enter,
    Local,
    Read,
    Write,
    WriteBegin,
    WriteCommit,
    Crash,
}

/// Observable side of a step, used to build trace events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Effect {
    pub kind: ActionKind,
    pub register: Option<RegisterId>,
    pub value: Option<u32>,
}

impl Effect {
    fn local(kind: ActionKind) -> Self {
        Self {
            kind,
            register: None,
            value: None,
        }
    }
}

/// A transition that cannot produce a successor.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("choice {choice} is not enabled for process {}", .pid + 1)]
    NotEnabled { pid: usize, choice: Choice },
    #[error("process {} attempted to store {value} into {register} (limit {limit})", .pid + 1)]
    Overflow {
        pid: usize,
        register: RegisterId,
        value: u32,
        limit: u32,
        kind: ActionKind,
    },
    #[error(transparent)]
    Register(#[from] RegisterError),
}

/// `(a.0, a.1) < (b.0, b.1)` in lexicographic order: ticket first, then
/// process index.
pub fn lex_less(a: (u32, usize), b: (u32, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// True when any observed ticket has reached the limit, so the process
/// must restart its scan.
pub fn overflow_guard(values: &[u32], m: u32) -> bool {
    values.iter().any(|&v| v >= m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Zero own cells and go back to the guard.
    Reset,
    /// Store `local_max + 1`.
    Increment,
}

pub fn bound_check(local_max: u32, m: u32) -> Branch {
    if local_max >= m {
        Branch::Reset
    } else {
        Branch::Increment
    }
}

/// A model instance: parameters plus transition relation.
#[derive(Clone, Debug)]
pub struct Protocol {
    params: ModelParams,
    read_model: ReadModel,
}

impl Protocol {
    pub fn new(params: ModelParams) -> Result<Self, ConfigError> {
        params.validate()?;
        let read_model = params.read_model();
        Ok(Self { params, read_model })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState {
            procs: vec![ProcessLocal::idle(self.params.crash_budget); self.params.n],
            regs: RegisterFile::new(self.params.n),
        }
    }

    fn first_label(&self) -> Label {
        match self.params.variant {
            Variant::Bakery => Label::SetChoosing,
            Variant::BakeryPP => Label::L1Scan(0),
        }
    }

    /// Register read at the current label, if the label is a read.
    fn read_target(&self, local: &ProcessLocal) -> Option<CellKind> {
        match local.pc {
            Label::L1Scan(_) | Label::MaxRead(_) | Label::L3(_) => Some(CellKind::Number),
            Label::L2(_) => Some(CellKind::Choosing),
            _ => None,
        }
    }

    /// Indices the process may read next at a read label.
    fn read_indices(&self, local: &ProcessLocal) -> Vec<usize> {
        match local.pc {
            Label::L1Scan(q) => vec![q as usize],
            Label::L2(j) | Label::L3(j) => vec![j as usize],
            Label::MaxRead(k) => match self.params.max_order {
                MaxOrder::Ascending => vec![k as usize],
                MaxOrder::Any => (0..self.params.n)
                    .filter(|idx| local.read_mask & (1 << idx) == 0)
                    .collect(),
            },
            _ => Vec::new(),
        }
    }

    /// The write performed at the current label, as `(register, value)`.
    fn write_target(&self, pid: usize, local: &ProcessLocal) -> Option<(RegisterId, u32)> {
        let lm = local.local_max;
        Some(match local.pc {
            Label::SetChoosing => (RegisterId::choosing(pid), 1),
            Label::MaxWrite => match self.params.variant {
                Variant::Bakery => (RegisterId::number(pid), lm.saturating_add(1)),
                Variant::BakeryPP => (RegisterId::number(pid), lm),
            },
            Label::BoundCheck => match bound_check(lm, self.params.m) {
                Branch::Reset => (RegisterId::number(pid), 0),
                Branch::Increment => (RegisterId::number(pid), lm + 1),
            },
            Label::ResetChoosing | Label::ClearChoosing => (RegisterId::choosing(pid), 0),
            Label::ExitWrite => (RegisterId::number(pid), 0),
            _ => return None,
        })
    }

    /// Choices available to `pid`, in canonical order.
    pub fn choices_for(&self, s: &SystemState, pid: usize) -> Vec<Choice> {
        let local = &s.procs[pid];
        let mut out = Vec::new();
        match local.pc {
            Label::Ncs => {
                out.push(Choice::Stay);
                out.push(Choice::Enter);
            }
            Label::Cs => out.push(Choice::Step),
            _ if self.read_target(local).is_some() => {
                let kind = self.read_target(local).unwrap();
                for idx in self.read_indices(local) {
                    let reg = RegisterId { owner: idx, kind };
                    let values = s
                        .regs
                        .read(pid, reg, &self.read_model)
                        .expect("read index within process count");
                    out.extend(values.into_iter().map(|value| Choice::Read {
                        index: idx as u8,
                        value,
                    }));
                }
            }
            _ => out.push(Choice::Step),
        }
        if local.crashes_left > 0 {
            out.push(Choice::Crash);
        }
        out
    }

    /// Every enabled `(pid, choice)`, ordered by pid then choice index.
    pub fn enabled_actions(&self, s: &SystemState) -> Vec<(usize, Choice)> {
        (0..s.n())
            .flat_map(|pid| self.choices_for(s, pid).into_iter().map(move |c| (pid, c)))
            .collect()
    }

    /// Deterministic successor of `s` when `pid` takes `choice`.
    pub fn apply(
        &self,
        s: &SystemState,
        pid: usize,
        choice: Choice,
    ) -> Result<(SystemState, Effect), StepError> {
        if pid >= s.n() || !self.choices_for(s, pid).contains(&choice) {
            return Err(StepError::NotEnabled { pid, choice });
        }
        let mut next = s.clone();
        let effect = match choice {
            Choice::Crash => {
                next.regs.reset_owned(pid);
                let left = next.procs[pid].crashes_left - 1;
                next.procs[pid] = ProcessLocal::idle(left);
                Effect::local(ActionKind::Crash)
            }
            Choice::Stay => Effect::local(ActionKind::Stay),
            Choice::Enter => {
                next.procs[pid].pc = self.first_label();
                Effect::local(ActionKind::Enter)
            }
            Choice::Read { index, value } => self.apply_read(&mut next, pid, index as usize, value),
            Choice::Step if s.procs[pid].pc == Label::Cs => {
                next.procs[pid].pc = Label::ExitWrite;
                Effect::local(ActionKind::Local)
            }
            Choice::Step => self.apply_write(&mut next, pid)?,
        };
        Ok((next, effect))
    }

    fn apply_read(&self, s: &mut SystemState, pid: usize, index: usize, value: u32) -> Effect {
        let n = self.params.n;
        let m = self.params.m;
        let local = &mut s.procs[pid];
        let kind = self
            .read_target(local)
            .expect("read choice at a read label");
        let advance = |at: usize, more: Label, done: Label| if at + 1 < n { more } else { done };
        local.pc = match local.pc {
            Label::L1Scan(q) => {
                if overflow_guard(&[value], m) {
                    Label::L1Scan(0)
                } else {
                    advance(q as usize, Label::L1Scan(q + 1), Label::SetChoosing)
                }
            }
            Label::MaxRead(k) => {
                local.local_max = local.local_max.max(value);
                local.read_mask |= 1 << index;
                advance(k as usize, Label::MaxRead(k + 1), Label::MaxWrite)
            }
            Label::L2(j) => {
                if value != 0 {
                    Label::L2(j)
                } else {
                    Label::L3(j)
                }
            }
            Label::L3(j) => {
                let own = s.regs.value(RegisterId::number(pid));
                if value != 0 && lex_less((value, j as usize), (own, pid)) {
                    Label::L3(j)
                } else {
                    advance(j as usize, Label::L2(j + 1), Label::Cs)
                }
            }
            other => unreachable!("read at non-read label {other}"),
        };
        Effect {
            kind: ActionKind::Read,
            register: Some(RegisterId { owner: index, kind }),
            value: Some(value),
        }
    }

    /// Label reached once the write at `local.pc` has completed.
    fn after_write(&self, local: &mut ProcessLocal) {
        let m = self.params.m;
        local.pc = match local.pc {
            Label::SetChoosing => {
                local.local_max = 0;
                local.read_mask = 0;
                Label::MaxRead(0)
            }
            Label::MaxWrite => match self.params.variant {
                Variant::Bakery => Label::ClearChoosing,
                Variant::BakeryPP => Label::BoundCheck,
            },
            Label::BoundCheck => match bound_check(local.local_max, m) {
                Branch::Reset => Label::ResetChoosing,
                Branch::Increment => Label::ClearChoosing,
            },
            Label::ResetChoosing => Label::L1Scan(0),
            Label::ClearChoosing => Label::L2(0),
            Label::ExitWrite => Label::Ncs,
            other => unreachable!("write completion at {other}"),
        };
        if matches!(local.pc, Label::ClearChoosing | Label::ResetChoosing) {
            local.local_max = 0;
            local.read_mask = 0;
        }
    }

    fn apply_write(&self, s: &mut SystemState, pid: usize) -> Result<Effect, StepError> {
        let (reg, value) = self
            .write_target(pid, &s.procs[pid])
            .expect("step choice at a write label");
        let (m, policy) = (self.params.m, self.params.overflow_policy);
        let overflow = |kind: ActionKind| {
            move |e: RegisterError| match e {
                RegisterError::OverflowAttempt { reg, value, limit } => StepError::Overflow {
                    pid,
                    register: reg,
                    value,
                    limit,
                    kind,
                },
                other => StepError::Register(other),
            }
        };
        let effect = match self.params.registers {
            RegisterModelKind::Atomic => {
                let stored = s
                    .regs
                    .write(pid, reg, value, m, policy)
                    .map_err(overflow(ActionKind::Write))?;
                self.after_write(&mut s.procs[pid]);
                Effect {
                    kind: ActionKind::Write,
                    register: Some(reg),
                    value: Some(stored),
                }
            }
            RegisterModelKind::Safe => {
                if s.regs.cell(reg)?.in_flight.is_none() {
                    let pending = s
                        .regs
                        .write_begin(pid, reg, value, m, policy)
                        .map_err(overflow(ActionKind::WriteBegin))?;
                    Effect {
                        kind: ActionKind::WriteBegin,
                        register: Some(reg),
                        value: Some(pending),
                    }
                } else {
                    let stored = s.regs.write_commit(pid, reg)?;
                    self.after_write(&mut s.procs[pid]);
                    Effect {
                        kind: ActionKind::WriteCommit,
                        register: Some(reg),
                        value: Some(stored),
                    }
                }
            }
        };
        Ok(effect)
    }
}
