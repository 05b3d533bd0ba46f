use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("map evaluated to NaN at x = {x}, epsilon = {epsilon}")]
    NumericDomain { x: f64, epsilon: f64 },

    #[error("state has length {got}, expected {expected}")]
    Shape { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("index {index} outside the admissible range {lo}..={hi}")]
    Range { index: usize, lo: usize, hi: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("failed to parse {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel(_)
                | Error::Parameter { .. }
                | Error::Parse { .. }
                | Error::Shape { .. }
                | Error::Range { .. }
                | Error::Io(_)
        )
    }
}
