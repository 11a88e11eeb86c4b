use thiserror::Error;

use crate::fw::FwRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unbounded: {0}")]
    Unbounded(String),

    #[error("{what} did not converge (residual {residual:e})")]
    NonConvergence { what: String, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite risk value at iteration {k}")]
    NonFiniteRisk { k: usize, trace: Vec<FwRecord> },

    #[error("oracle failed at iteration {k}: {source}")]
    Oracle {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: usize, got: usize, what: &str) -> Self {
        Error::Shape(format!("{what}: expected dimension {expected}, got {got}"))
    }

    pub(crate) fn at_iteration(self, k: usize) -> Self {
        match self {
            e @ Error::Oracle { .. } => e,
            e => Error::Oracle { k, source: Box::new(e) },
        }
    }
}
