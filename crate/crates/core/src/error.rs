use thiserror::Error;

/// Errors raised across the lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge for {what} (residual {residual:e})")]
    QuadratureNonConvergence { what: String, residual: f64 },

    #[error("driving function failed the smoothness probe (worst relative spread {spread:.3})")]
    NonSmoothDriving { spread: f64 },

    #[error("per-direction derivative estimates disagree: spread {spread:e} vs extrapolation residual {residual:e}")]
    InconsistentDirections { spread: f64, residual: f64 },

    #[error("lattice box is empty")]
    EmptyDomain,

    #[error("domain exhausted at time step {time_step}: interior is empty")]
    DomainExhausted { time_step: usize },

    #[error("requested lattice needs {required} bytes, cap is {cap}")]
    MemoryCapExceeded { required: u128, cap: u128 },

    #[error("slice mismatch: {0}")]
    SliceMismatch(String),

    #[error("driving function violates the growth axioms: {0}")]
    ValidationFailed(String),

    #[error("coefficients are inconsistent: {0}")]
    InconsistentCoefficients(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ValidationFailed(_)
            | Error::NonSmoothDriving { .. }
            | Error::InconsistentDirections { .. }
            | Error::InconsistentCoefficients(_)
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. } => 1,
            Error::QuadratureNonConvergence { .. } => 2,
            Error::EmptyDomain
            | Error::DomainExhausted { .. }
            | Error::MemoryCapExceeded { .. }
            | Error::SliceMismatch(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
