use thiserror::Error;

use crate::expr::{EvalError, ParseError};
use crate::grid::Support;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("field support mismatch: expected {expected:?}, got {found:?}")]
    SupportMismatch { expected: Support, found: Support },

    #[error("field length {found} does not match {expected} active cells")]
    LengthMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("{context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },

    #[error("invalid coefficient: {0}")]
    Coefficient(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite at row {row}")]
    NotPositiveDefinite { row: usize },

    #[error("age grid: {0}")]
    Age(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invariant violated at t = {t}: {what}")]
    Invariant { t: f64, what: String },

    #[error("assumptions violated: {0}")]
    Assumptions(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
