use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("process {0} has crashed")]
    Crashed(crate::model::ProcessId),
    /// A simulation produced output that breaks one of its own guarantees.
    #[error("simulation invariant broken: {0}")]
    Invariant(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}
