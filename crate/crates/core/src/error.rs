//! Crate-wide error type.
//!
//! Numerical-contract violations (invalid schedules, non-normalized
//! distributions), impossible states (no clean completion with positive
//! probability), and resource guards (enumeration caps, overflow) are all
//! reported as typed errors rather than panics so callers can map them to
//! exit codes.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A constructor or operation received a structurally invalid argument.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A survival schedule violated `alpha[0] = 1`, `alpha[T] = 0`, or strict
    /// monotone decrease.
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// A probability table failed validation (negative entry or mass not
    /// summing to one within tolerance).
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// A time pair was ordered the wrong way for the requested operation.
    #[error("invalid time order: {0}")]
    TimeOrder(String),

    /// No clean sequence compatible with the given partially masked state has
    /// positive probability. This is unreachable under full-support data
    /// distributions; it indicates a buggy proposal or a hand-built
    /// distribution with holes in its support.
    #[error("state has no clean completion with positive probability (canonical index {canonical_index})")]
    ZeroSupport {
        /// Canonical base-(V+1) index of the offending state.
        canonical_index: u64,
    },

    /// An enumeration request exceeded the dense-state-space cap.
    #[error("state space of {states} states exceeds enumeration cap {cap}")]
    CapExceeded {
        /// Number of states the request would enumerate.
        states: u64,
        /// Configured cap.
        cap: u64,
    },

    /// `(V+1)^L` (or a related count) does not fit in 64 bits.
    #[error("state space size overflows u64 (L={length}, V={vocab})")]
    Overflow {
        /// Sequence length.
        length: usize,
        /// Vocabulary size (excluding MASK).
        vocab: u32,
    },

    /// A terminal-only operation was applied to a sequence containing masks.
    #[error("operation requires a terminal (fully unmasked) sequence; {masked} positions are masked")]
    NotTerminal {
        /// Number of masked positions in the offending sequence.
        masked: usize,
    },

    /// Parsing a serialized artifact (distribution table, config) failed.
    #[error("parse error: {0}")]
    Parse(String),
}
