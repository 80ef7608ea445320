//! Crate wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix argument had the wrong length.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for {context} of size {size}")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        size: usize,
    },

    /// The operation needs data the game does not carry (analytic gradients,
    /// a constraint Jacobian, affine structure, ...).
    #[error("operation requires {0}")]
    Unsupported(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("projection did not converge within {sweeps} sweeps (residual {residual:e})")]
    ProjectionDiverged { sweeps: usize, residual: f64 },

    #[error("linear system is singular or badly scaled")]
    SingularSystem,

    /// Raised only in strict mode; otherwise violations are logged.
    #[error("schedule violates `{0}`")]
    ScheduleViolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
