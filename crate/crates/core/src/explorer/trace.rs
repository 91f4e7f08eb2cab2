//! Replayable event logs and their line-delimited JSON file format.
//!
//! A trace file is one JSON object per line: a header carrying the format
//! version and the full configuration, one line per event, and an optional
//! trailer with the step count and the hash of the final state. Process
//! indices are one-based in the file.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ExploreConfig, ViolationKind};
use crate::algorithm::{ActionKind, Choice, ConfigError, Label, Protocol, StepError, SystemState};
use crate::register::RegisterId;

pub const TRACE_FORMAT: &str = "bakery-trace/1";

mod one_based {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(pid: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*pid as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let v = u64::deserialize(d)?;
        if v == 0 {
            return Err(serde::de::Error::custom("process ids start at 1"));
        }
        Ok(v as usize - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    #[serde(with = "one_based")]
    pub pid: usize,
    pub pc: Label,
    pub action: ActionKind,
    pub register: Option<RegisterId>,
    pub value: Option<u32>,
    pub choice: Choice,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEnd {
    pub steps: u64,
    pub final_hash: String,
    pub violation: Option<ViolationKind>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        format: String,
        config: ExploreConfig,
    },
    Event(Event),
    End(TraceEnd),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub config: ExploreConfig,
    pub events: Vec<Event>,
    pub end: Option<TraceEnd>,
}

impl Default for Trace {
    fn default() -> Self {
        Self {
            config: ExploreConfig::new(crate::algorithm::ModelParams::new(
                crate::algorithm::Variant::BakeryPP,
                1,
                1,
            )),
            events: Vec::new(),
            end: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Layout { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("replay diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },
    #[error("trace configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("final state hash {actual} does not match recorded {expected}")]
    HashMismatch { expected: String, actual: String },
}

/// Result of re-executing a trace.
#[derive(Clone, Debug)]
pub struct Replayed {
    pub state: SystemState,
    pub steps: u64,
    /// Set when the last event was a refused (overflowing) write.
    pub overflow: Option<StepError>,
}

impl Replayed {
    pub fn state_hash(&self) -> String {
        self.state.fingerprint()
    }
}

impl Trace {
    /// Execute `actions` from the initial state, logging each step.
    ///
    /// Stops at the first overflowing write, which is logged as the last
    /// event. Returns the trace, the last state reached and the overflow if
    /// one occurred. A trailer is always attached.
    pub fn record(
        config: &ExploreConfig,
        actions: &[(usize, Choice)],
        violation: Option<ViolationKind>,
    ) -> Result<(Trace, SystemState, Option<StepError>), ReplayError> {
        let proto = config.protocol()?;
        let mut state = proto.initial_state();
        let mut events = Vec::with_capacity(actions.len());
        let mut overflow = None;
        for (idx, &(pid, choice)) in actions.iter().enumerate() {
            let step = idx as u64 + 1;
            let pc = state
                .procs
                .get(pid)
                .map(|p| p.pc)
                .ok_or_else(|| ReplayError::Divergence {
                    step,
                    reason: format!("no process {}", pid + 1),
                })?;
            match proto.apply(&state, pid, choice) {
                Ok((next, effect)) => {
                    events.push(Event {
                        step,
                        pid,
                        pc,
                        action: effect.kind,
                        register: effect.register,
                        value: effect.value,
                        choice,
                    });
                    state = next;
                }
                Err(
                    err @ StepError::Overflow {
                        register,
                        value,
                        kind,
                        ..
                    },
                ) if idx + 1 == actions.len() => {
                    events.push(Event {
                        step,
                        pid,
                        pc,
                        action: kind,
                        register: Some(register),
                        value: Some(value),
                        choice,
                    });
                    overflow = Some(err);
                }
                Err(e) => {
                    return Err(ReplayError::Divergence {
                        step,
                        reason: e.to_string(),
                    })
                }
            }
        }
        let end = TraceEnd {
            steps: events.len() as u64,
            final_hash: state.fingerprint(),
            violation,
        };
        let trace = Trace {
            config: config.clone(),
            events,
            end: Some(end),
        };
        Ok((trace, state, overflow))
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn actions(&self) -> Vec<(usize, Choice)> {
        self.events.iter().map(|e| (e.pid, e.choice)).collect()
    }

    /// Re-execute the trace under its own configuration, checking every
    /// recorded field of every event and the trailer hash if present.
    pub fn replay(&self) -> Result<Replayed, ReplayError> {
        let proto = self.config.protocol()?;
        replay_events(&proto, &self.events, self.end.as_ref())
    }

    /// As [`Self::replay`], but first insists the trace was produced under
    /// `config`'s model.
    pub fn replay_against(&self, config: &ExploreConfig) -> Result<Replayed, ReplayError> {
        if config.model != self.config.model {
            return Err(ReplayError::ConfigMismatch(format!(
                "trace model {:?} differs from {:?}",
                self.config.model, config.model
            )));
        }
        self.replay()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = Record::Header {
            format: TRACE_FORMAT.to_string(),
            config: self.config.clone(),
        };
        let line = |w: &mut dyn Write, r: &Record| -> std::io::Result<()> {
            serde_json::to_writer(&mut *w, r).map_err(std::io::Error::other)?;
            w.write_all(b"\n")
        };
        line(&mut w, &header)?;
        for e in &self.events {
            line(&mut w, &Record::Event(e.clone()))?;
        }
        if let Some(end) = &self.end {
            line(&mut w, &Record::End(end.clone()))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Trace, TraceError> {
        let mut config = None;
        let mut events = Vec::new();
        let mut end = None;
        for (idx, line) in r.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|source| TraceError::Parse {
                line: line_no,
                source,
            })?;
            let layout = |reason: &str| TraceError::Layout {
                line: line_no,
                reason: reason.into(),
            };
            match rec {
                Record::Header { format, config: c } => {
                    if config.is_some() {
                        return Err(layout("duplicate header"));
                    }
                    if format != TRACE_FORMAT {
                        return Err(layout(&format!("unsupported format `{format}`")));
                    }
                    config = Some(c);
                }
                _ if config.is_none() => return Err(layout("missing header")),
                _ if end.is_some() => return Err(layout("record after trailer")),
                Record::Event(e) => events.push(e),
                Record::End(t) => end = Some(t),
            }
        }
        let config = config.ok_or(TraceError::Layout {
            line: 0,
            reason: "empty trace".into(),
        })?;
        Ok(Trace {
            config,
            events,
            end,
        })
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        Self::read_from(text.as_bytes())
    }
}

fn replay_events(
    proto: &Protocol,
    events: &[Event],
    end: Option<&TraceEnd>,
) -> Result<Replayed, ReplayError> {
    let mut state = proto.initial_state();
    let mut overflow = None;
    for (idx, e) in events.iter().enumerate() {
        let diverge = |reason: String| ReplayError::Divergence {
            step: e.step,
            reason,
        };
        if e.step != idx as u64 + 1 {
            return Err(diverge(format!("expected step number {}", idx + 1)));
        }
        if overflow.is_some() {
            return Err(diverge("event after a refused write".into()));
        }
        let pc = state
            .procs
            .get(e.pid)
            .map(|p| p.pc)
            .ok_or_else(|| diverge(format!("no process {}", e.pid + 1)))?;
        if pc != e.pc {
            return Err(diverge(format!(
                "process {} is at {pc}, trace says {}",
                e.pid + 1,
                e.pc
            )));
        }
        match proto.apply(&state, e.pid, e.choice) {
            Ok((next, effect)) => {
                let observed = (effect.kind, effect.register, effect.value);
                let recorded = (e.action, e.register, e.value);
                if observed != recorded {
                    return Err(diverge(format!(
                        "step produced {observed:?}, trace recorded {recorded:?}"
                    )));
                }
                state = next;
            }
            Err(
                err @ StepError::Overflow {
                    register,
                    value,
                    kind,
                    ..
                },
            ) => {
                if (kind, Some(register), Some(value)) != (e.action, e.register, e.value) {
                    return Err(diverge(format!("unexpected overflow: {err}")));
                }
                overflow = Some(err);
            }
            Err(err) => return Err(diverge(err.to_string())),
        }
    }
    let replayed = Replayed {
        steps: events.len() as u64,
        state,
        overflow,
    };
    if let Some(end) = end {
        if end.steps != replayed.steps {
            return Err(ReplayError::Divergence {
                step: replayed.steps,
                reason: format!("trailer counts {} steps", end.steps),
            });
        }
        let actual = replayed.state_hash();
        if actual != end.final_hash {
            return Err(ReplayError::HashMismatch {
                expected: end.final_hash.clone(),
                actual,
            });
        }
    }
    Ok(replayed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{ModelParams, Variant};

    fn cfg() -> ExploreConfig {
        ExploreConfig::new(ModelParams::new(Variant::BakeryPP, 2, 3))
    }

    fn sample() -> Trace {
        let actions = [
            (0, Choice::Enter),
            (0, Choice::Read { index: 0, value: 0 }),
            (1, Choice::Stay),
            (0, Choice::Read { index: 1, value: 0 }),
            (0, Choice::Step),
        ];
        Trace::record(&cfg(), &actions, None).unwrap().0
    }

    #[test]
    fn file_round_trip() {
        let t = sample();
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), t.len() + 2);
        assert!(text.lines().next().unwrap().contains(TRACE_FORMAT));
        assert_eq!(Trace::parse(&text).unwrap(), t);
    }

    #[test]
    fn replay_reproduces_hash() {
        let t = sample();
        let r = t.replay().unwrap();
        assert_eq!(r.state_hash(), t.end.as_ref().unwrap().final_hash);
        assert_eq!(r.state.choosing(0), 1);
    }

    #[test]
    fn truncated_trace_gives_prefix_state() {
        let mut t = sample();
        t.events.truncate(2);
        t.end = None;
        let r = t.replay().unwrap();
        assert_eq!(r.steps, 2);
        assert_eq!(r.state.procs[0].pc, Label::L1Scan(1));
    }

    #[test]
    fn edited_choice_diverges() {
        let mut t = sample();
        t.events[1].choice = Choice::Read { index: 0, value: 3 };
        match t.replay() {
            Err(ReplayError::Divergence { step, .. }) => assert_eq!(step, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_config_is_refused() {
        let t = sample();
        let other = ExploreConfig::new(ModelParams::new(Variant::Bakery, 2, 3));
        assert!(matches!(
            t.replay_against(&other),
            Err(ReplayError::ConfigMismatch(_))
        ));
        assert!(t.replay_against(&cfg()).is_ok());
    }

    #[test]
    fn layout_errors() {
        assert!(Trace::parse("").is_err());
        let t = sample().to_jsonl();
        let no_header: String = t.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            Trace::parse(&no_header),
            Err(TraceError::Layout { line: 1, .. })
        ));
        let bad = t.replace(TRACE_FORMAT, "bakery-trace/99");
        assert!(Trace::parse(&bad).is_err());
    }
}
