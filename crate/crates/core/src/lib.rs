//! Lamport's Bakery lock and Bakery++, its variant for bounded registers.
//!
//! - [`register`]: single-writer shared cells, atomic or safe.
//! - [`algorithm`]: both locks as micro-step state machines.
//! - [`explorer`]: exhaustive and random state-space search, traces, replay.
//! - [`runtime`]: Bakery++ as a thread lock, plus a stress harness.

pub mod algorithm;
pub mod explorer;
pub mod register;
pub mod runtime;

pub use algorithm::{
    bound_check, lex_less, overflow_guard, Branch, Choice, Label, ModelParams, Protocol,
    SystemState, Variant,
};
pub use explorer::{
    check_state, explore_exhaustive, explore_random, ExploreConfig, Report, Strategy, Trace,
    Verdict, Violation, ViolationKind,
};
pub use register::{OverflowPolicy, RegisterFile, RegisterId, RegisterModelKind};
