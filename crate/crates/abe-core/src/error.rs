use thiserror::Error;

pub type Result<T> = std::result::Result<T, AbeError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbeError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("unsupported sample rate {0} Hz (expected 8000 or 16000)")]
    UnsupportedRate(u32),
    #[error("expected sample rate {expected} Hz, got {got} Hz")]
    RateMismatch { expected: u32, got: u32 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid filter design: {0}")]
    FilterDesign(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state dimension {got} exceeds cap {cap}")]
    StateCap { got: usize, cap: usize },
    #[error("improper transfer function: {0}")]
    Improper(String),
    #[error("system is not stable (spectral radius {0:.6})")]
    Unstable(f64),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unsupported plant structure: {0}")]
    UnsupportedPlant(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
