use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("support violation: test {test_id} step {step} has q_alpha = {q_alpha}")]
    SupportViolation { test_id: u64, step: usize, q_alpha: f64 },

    #[error("control vector has length {got}, expected {expected}")]
    BetaLength { expected: usize, got: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("incomplete likelihood record: test {test_id} step {step} has {got} importance probabilities, expected {expected}")]
    IncompleteRecord { test_id: u64, step: usize, expected: usize, got: usize },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("RHW undefined: estimate mean is {0}")]
    RhwUndefined(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid world: {0}")]
    InvalidWorld(String),
}
