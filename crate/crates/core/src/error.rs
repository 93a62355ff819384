use thiserror::Error;

use crate::embedding::EmbedError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the memory engine and its harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range. Raised at construction time.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A caller broke an operation's precondition (dimension mismatch,
    /// out-of-order session, negative loss, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Embedding(#[from] EmbedError),

    /// Fusion could not bring the entropy under the requested bound.
    #[error("entropy bound infeasible: entropy {entropy} still above epsilon {epsilon}")]
    BoundInfeasible { entropy: f64, epsilon: f64 },

    /// A step of a multi-session run failed.
    #[error("step for session {index} failed: {source}")]
    Step {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    /// A grid point of a parameter sweep failed.
    #[error("sweep aborted at alpha={alpha}, beta={beta}, lambda={lambda}: {source}")]
    Sweep {
        alpha: f64,
        beta: f64,
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error stems from invalid input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidConfig(_) | Error::Contract(_) | Error::Json(_) => true,
            Error::Step { source, .. } | Error::Sweep { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
