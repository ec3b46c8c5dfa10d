use crate::expr::{EvalError, ParseError};
use crate::quad::QuadError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("cannot parse `{field}`: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("`{field}` cannot be evaluated: {source}")]
    Eval {
        field: String,
        #[source]
        source: EvalError,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("resonant problem: {0}")]
    Resonance(String),
    #[error("operation not applicable: {0}")]
    NotApplicable(String),
    #[error("linear system is numerically singular (1-norm condition {condition:e})")]
    Singular { condition: f64 },
    #[error("iteration did not converge after {iterations} steps (last update {last_update:e})")]
    NoConvergence { iterations: usize, last_update: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
