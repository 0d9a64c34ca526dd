//! Crate-wide error type.
//!
//! Every fallible operation in this library returns [`Error`]. Variants are
//! grouped by failure class rather than by module so callers can match on
//! what went wrong instead of where.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A row or cell of an input file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input data is well-formed but violates a documented requirement.
    #[error("validation error: {0}")]
    Validation(String),

    /// An API precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Not enough observations to run the requested computation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A date window selects no rows.
    #[error("empty window: {0}")]
    EmptyWindow(String),

    /// A histogram ended up with no in-range samples.
    #[error("empty histogram: {0}")]
    EmptyHistogram(String),

    /// The Hellinger series never exceeds its threshold.
    #[error("no crash detected: {0}")]
    NoCrashDetected(String),

    /// A regressor has zero variance, so OLS coefficients are undefined.
    #[error("degenerate regressor: {0}")]
    DegenerateRegressor(String),

    /// Instantaneous phase is undefined at a zero-magnitude sample.
    #[error("undefined phase at sample {index}")]
    UndefinedPhase { index: usize },

    /// An iterative solver hit its iteration cap before converging.
    #[error("iteration limit: {0}")]
    IterationLimit(String),

    /// A normalizer is zero, so the normalized quantity is undefined.
    #[error("normalization error: {0}")]
    Normalization(String),

    /// Too few events for a statistical fit.
    #[error("insufficient events: {0}")]
    InsufficientEvents(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
