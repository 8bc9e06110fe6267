//! Fractional-permission resource algebra: exact fractions, points-to and
//! reference-ending chunks, symbolic states, chunk entailment, and the
//! reference-end view shift with its transitive saturation.

mod fraction;
mod state;

pub use fraction::{Fraction, FractionError};
pub use state::{
    CellId, Chunk, ConservationError, LogicError, RefId, Shift, ShiftError, SymState, Value,
};
