use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unsupported dimension d = {0} (velocity evaluation is implemented for d = 3)")]
    UnsupportedDimension(u32),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown bubble index {0}")]
    UnknownBubble(u32),

    #[error("symmetry violation: {0}")]
    Symmetry(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
