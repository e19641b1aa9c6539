//! Crate-wide error type.

use thiserror::Error;

/// Errors emitted by the core library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Two operands (or an operand and a config) disagree on shape.
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A constructor received data whose length does not match rows x cols.
    #[error("data length {got} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, got: usize },

    /// A configuration value is inconsistent or out of range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A selection was asked for more items than exist.
    #[error("budget error: requested {requested} of {available} available")]
    Budget { requested: usize, available: usize },

    /// Time weights sum to (almost) zero; the normalized aggregate is undefined.
    #[error("degenerate time weights: |sum| = {sum_abs:e} <= {eps:e}")]
    DegenerateWeights { sum_abs: f64, eps: f64 },

    /// A precondition on the inputs does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A component broke an internal contract (e.g. a pruning hook returned
    /// indices that are not visual tokens of the current sequence).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Weight file parsing or shape validation failed.
    #[error("weight io: {0}")]
    WeightIo(String),
}

pub type Result<T> = std::result::Result<T, Error>;
