use thiserror::Error;

/// Errors raised by the lacuna library.
#[derive(Debug, Error)]
pub enum LacunaError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix at index {index} is singular")]
    SingularMatrix { index: usize },

    #[error("sequence index {n} out of range (sequence has {len} members)")]
    IndexOutOfRange { n: usize, len: usize },

    #[error("insufficient precision: have {have} bits, need {need}")]
    PrecisionInsufficient { have: u64, need: u64 },

    #[error("{what}: projected cost {projected} exceeds cap {cap}{hint}")]
    CostGuard {
        what: &'static str,
        projected: u128,
        cap: u128,
        hint: &'static str,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LacunaError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> LacunaError {
    LacunaError::InvalidParameter(msg.into())
}
