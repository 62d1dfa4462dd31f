use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KamError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degree caps differ: {0} vs {1}")]
    CapMismatch(usize, usize),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("non-finite value in {0}")]
    Numeric(String),
    #[error("sequence is not tamed: {0}")]
    NotTamed(String),
    #[error("schedule infeasible: {0}")]
    ScheduleInfeasible(String),
    #[error("initialization failed: {0}")]
    InitializationFailed(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("resonance at degree {degree}: |lambda^k - lambda| = {divisor:e}")]
    Resonance { degree: usize, divisor: f64 },
}

pub type Result<T> = std::result::Result<T, KamError>;

impl From<std::io::Error> for KamError {
    fn from(e: std::io::Error) -> Self {
        KamError::Io(e.to_string())
    }
}
