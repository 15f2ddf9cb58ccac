use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Inadmissible smallness parameters (ε ≤ 0) are *not* errors at the
/// evaluation layer; they surface here only when a downstream formula cannot
/// be evaluated with them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum UcError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("hypothesis violated: {0}")]
    Inadmissible(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {0:e}")]
    NonSymmetric(f64),

    #[error("matrix is not Hermitian: defect {0:e}")]
    NonHermitian(f64),

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("boundary condition violated: {0}")]
    BoundaryCondition(String),

    #[error("support precondition violated: {0}")]
    Support(String),

    #[error("empty spectral slice")]
    EmptySlice,

    #[error("zero norm")]
    ZeroNorm,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("incommensurate grids: {0}")]
    Incommensurate(String),

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, UcError>;

impl From<std::io::Error> for UcError {
    fn from(e: std::io::Error) -> Self {
        UcError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for UcError {
    fn from(e: serde_json::Error) -> Self {
        UcError::Serde(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> UcError {
    UcError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
