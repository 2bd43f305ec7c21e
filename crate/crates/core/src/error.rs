use thiserror::Error;

/// Errors raised by the CAAF optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaafError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid affinity matrix: {0}")]
    InvalidAffinity(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("probe must be the last sample (index {expected}), got {actual}")]
    ProbeNotLast { expected: usize, actual: usize },

    #[error("soft initialization requires initial scores")]
    MissingInitialScores,

    #[error("score {value} at index {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },

    #[error("sample {0} is already labeled")]
    AlreadyLabeled(usize),

    #[error("the probe (index {0}) cannot receive feedback")]
    ProbeFeedback(usize),

    #[error("sample index {index} out of range for {m} samples")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("linear system is not positive definite or produced non-finite values")]
    SingularSystem,
}

pub type Result<T> = std::result::Result<T, CaafError>;
