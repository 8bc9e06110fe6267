//! lambda-PA: a mini-language modeling Rust's allocation, dereference,
//! assignment and borrowing, together with two enforcement engines for
//! its pointer-aliasing discipline:
//!
//! * [`verifier`]: forward symbolic execution over fractional points-to
//!   chunks and reference-ending resources, applying reference-end view
//!   shifts lazily where a step's required fraction is missing;
//! * [`monitor`]: a concrete interpreter whose ghost capability table
//!   enforces the identical discipline at runtime, serving as the
//!   independent oracle for differential testing ([`fuzz`]).
//!
//! A program the verifier accepts must run clean under the monitor; the
//! fuzz harness checks exactly that, plus trace agreement, on streams of
//! generated programs.

pub mod fuzz;
pub mod logic;
pub mod monitor;
pub mod syntax;
pub mod trace;
pub mod verifier;

pub use fuzz::{differential, gen_program, DiffReport, GenConfig};
pub use logic::{
    CellId, Chunk, ConservationError, Fraction, FractionError, LogicError, RefId, Shift,
    ShiftError, SymState, Value,
};
pub use monitor::{
    run, run_traced, run_unchecked, ConcreteState, MonitorEntry, RuntimeError, RuntimeErrorKind,
};
pub use syntax::{check_scopes, parse, pretty, Expr, ExprKind, ParseError, ScopeError, Span};
pub use trace::TraceDocument;
pub use verifier::{explain, sym_exec, sym_exec_traced, verify, RejectReason, Rejection, TraceEntry, Verdict};
