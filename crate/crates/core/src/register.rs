//! Single-writer shared registers at two fidelity levels.
//!
//! In [`RegisterModelKind::Atomic`] mode every read and write is one
//! indivisible step. In [`RegisterModelKind::Safe`] mode a write is split
//! into a begin step and a commit step; a read by another process that
//! lands between the two may observe any value of the flicker domain.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which of a process's two shared cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Number,
    Choosing,
}

/// A shared cell, named by its single writer and its kind.
///
/// `owner` is a zero-based process index. The textual form is one-based to
/// match the usual `number[1..N]` notation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegisterId {
    pub owner: usize,
    pub kind: CellKind,
}

impl RegisterId {
    pub fn number(owner: usize) -> Self {
        Self {
            owner,
            kind: CellKind::Number,
        }
    }

    pub fn choosing(owner: usize) -> Self {
        Self {
            owner,
            kind: CellKind::Choosing,
        }
    }
}

impl fmt::Display for RegisterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            CellKind::Number => "number",
            CellKind::Choosing => "choosing",
        };
        write!(f, "{name}[{}]", self.owner + 1)
    }
}

impl FromStr for RegisterId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, rest) = s
            .split_once('[')
            .ok_or_else(|| format!("bad register `{s}`"))?;
        let idx = rest
            .strip_suffix(']')
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| format!("bad register index in `{s}`"))?;
        let kind = match name {
            "number" => CellKind::Number,
            "choosing" => CellKind::Choosing,
            _ => return Err(format!("unknown register kind `{name}`")),
        };
        Ok(Self {
            owner: idx - 1,
            kind,
        })
    }
}

impl Serialize for RegisterId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegisterId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Register fidelity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegisterModelKind {
    Atomic,
    Safe,
}

/// Read semantics: fidelity plus the value set an overlapped read may return.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadModel {
    pub kind: RegisterModelKind,
    /// Largest representable ticket.
    pub limit: u32,
    /// Extend the number flicker domain with the single value `limit + 1`.
    pub flicker_above_limit: bool,
}

impl ReadModel {
    /// Values an overlapped read of a cell of `kind` may return.
    pub fn flicker_domain(&self, kind: CellKind) -> std::ops::RangeInclusive<u32> {
        match kind {
            CellKind::Choosing => 0..=1,
            CellKind::Number if self.flicker_above_limit => 0..=self.limit + 1,
            CellKind::Number => 0..=self.limit,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegisterCell {
    pub stable: u32,
    /// Pending value between write-begin and write-commit (safe mode only).
    pub in_flight: Option<u32>,
}

/// What to do when a write would store a number above the limit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    /// Report the attempt and refuse the write.
    #[default]
    Trap,
    /// Store `v mod (limit + 1)`; diagnostic only.
    Wrap,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegisterError {
    #[error("unknown register {reg} (file holds {procs} processes)")]
    UnknownRegister { reg: RegisterId, procs: usize },
    #[error("overflow: attempt to store {value} into {reg} (limit {limit})")]
    OverflowAttempt {
        reg: RegisterId,
        value: u32,
        limit: u32,
    },
    #[error("write to {reg} begun while another write is in flight")]
    WriteInFlight { reg: RegisterId },
    #[error("commit on {reg} with no write in flight")]
    NothingInFlight { reg: RegisterId },
    #[error("process {writer} attempted to write {reg}, owned by process {}", .reg.owner + 1)]
    ForeignWrite { writer: usize, reg: RegisterId },
}

/// The `2N` shared cells: `number[0..N]` followed by `choosing[0..N]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegisterFile {
    cells: Vec<RegisterCell>,
}

impl RegisterFile {
    /// All cells zero.
    pub fn new(procs: usize) -> Self {
        Self {
            cells: vec![RegisterCell::default(); 2 * procs],
        }
    }

    pub fn procs(&self) -> usize {
        self.cells.len() / 2
    }

    /// Number of shared cells; always `2N`.
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    fn slot(&self, reg: RegisterId) -> Result<usize, RegisterError> {
        let n = self.procs();
        if reg.owner >= n {
            return Err(RegisterError::UnknownRegister { reg, procs: n });
        }
        Ok(match reg.kind {
            CellKind::Number => reg.owner,
            CellKind::Choosing => n + reg.owner,
        })
    }

    pub fn cell(&self, reg: RegisterId) -> Result<&RegisterCell, RegisterError> {
        Ok(&self.cells[self.slot(reg)?])
    }

    /// Stable value of a cell, panicking on an unknown id.
    pub fn value(&self, reg: RegisterId) -> u32 {
        self.cells[self.slot(reg).expect("register id in range")].stable
    }

    pub fn iter(&self) -> impl Iterator<Item = (RegisterId, &RegisterCell)> {
        let n = self.procs();
        self.cells.iter().enumerate().map(move |(slot, cell)| {
            let reg = if slot < n {
                RegisterId::number(slot)
            } else {
                RegisterId::choosing(slot - n)
            };
            (reg, cell)
        })
    }

    /// Every value `reader` may observe when reading `reg`.
    ///
    /// Reads of the reader's own cells never flicker: a single writer knows
    /// what it last wrote.
    pub fn read(
        &self,
        reader: usize,
        reg: RegisterId,
        model: &ReadModel,
    ) -> Result<Vec<u32>, RegisterError> {
        let cell = self.cell(reg)?;
        let overlapped = model.kind == RegisterModelKind::Safe
            && cell.in_flight.is_some()
            && reg.owner != reader;
        Ok(if overlapped {
            model.flicker_domain(reg.kind).collect()
        } else {
            vec![cell.stable]
        })
    }

    /// Value actually stored for an attempted write of `value`, or the
    /// overflow report when the policy traps.
    fn admit(
        reg: RegisterId,
        value: u32,
        limit: u32,
        policy: OverflowPolicy,
    ) -> Result<u32, RegisterError> {
        let max = match reg.kind {
            CellKind::Number => limit,
            CellKind::Choosing => 1,
        };
        if value <= max {
            return Ok(value);
        }
        match (reg.kind, policy) {
            (CellKind::Number, OverflowPolicy::Wrap) => Ok(value % (limit + 1)),
            (CellKind::Number, OverflowPolicy::Trap) => {
                Err(RegisterError::OverflowAttempt { reg, value, limit })
            }
            // Choosing only ever receives 0 or 1 from the protocol.
            (CellKind::Choosing, _) => Err(RegisterError::OverflowAttempt {
                reg,
                value,
                limit: 1,
            }),
        }
    }

    fn check_owner(writer: usize, reg: RegisterId) -> Result<(), RegisterError> {
        if writer != reg.owner {
            return Err(RegisterError::ForeignWrite { writer, reg });
        }
        Ok(())
    }

    /// Single indivisible write. Returns the stored value.
    pub fn write(
        &mut self,
        writer: usize,
        reg: RegisterId,
        value: u32,
        limit: u32,
        policy: OverflowPolicy,
    ) -> Result<u32, RegisterError> {
        Self::check_owner(writer, reg)?;
        let slot = self.slot(reg)?;
        if self.cells[slot].in_flight.is_some() {
            return Err(RegisterError::WriteInFlight { reg });
        }
        let stored = Self::admit(reg, value, limit, policy)?;
        self.cells[slot].stable = stored;
        Ok(stored)
    }

    /// First half of a safe-mode write. Returns the pending value.
    pub fn write_begin(
        &mut self,
        writer: usize,
        reg: RegisterId,
        value: u32,
        limit: u32,
        policy: OverflowPolicy,
    ) -> Result<u32, RegisterError> {
        Self::check_owner(writer, reg)?;
        let slot = self.slot(reg)?;
        if self.cells[slot].in_flight.is_some() {
            return Err(RegisterError::WriteInFlight { reg });
        }
        let stored = Self::admit(reg, value, limit, policy)?;
        self.cells[slot].in_flight = Some(stored);
        Ok(stored)
    }

    /// Second half of a safe-mode write. Returns the committed value.
    pub fn write_commit(&mut self, writer: usize, reg: RegisterId) -> Result<u32, RegisterError> {
        Self::check_owner(writer, reg)?;
        let slot = self.slot(reg)?;
        let value = self.cells[slot]
            .in_flight
            .take()
            .ok_or(RegisterError::NothingInFlight { reg })?;
        self.cells[slot].stable = value;
        Ok(value)
    }

    /// Crash-restart: zero both cells owned by `pid` and drop any pending
    /// write of theirs. Other cells are untouched.
    pub fn reset_owned(&mut self, pid: usize) {
        for reg in [RegisterId::number(pid), RegisterId::choosing(pid)] {
            if let Ok(slot) = self.slot(reg) {
                self.cells[slot] = RegisterCell::default();
            }
        }
    }

    /// Copy with every pending write dropped.
    pub fn stable_projection(&self) -> Self {
        Self {
            cells: self
                .cells
                .iter()
                .map(|c| RegisterCell {
                    stable: c.stable,
                    in_flight: None,
                })
                .collect(),
        }
    }

    pub(crate) fn cells(&self) -> &[RegisterCell] {
        &self.cells
    }
}
