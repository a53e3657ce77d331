use std::path::Path;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Every problem found in a configuration, one per entry.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error(transparent)]
    Estimation(#[from] avscv_core::Error),

    #[error(transparent)]
    Simulation(#[from] avscv_sim::Error),

    #[error("{0}")]
    Runtime(String),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Error::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// 1 for configuration errors, 2 for runtime errors, 3 for failed verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Verification(_) => 3,
            _ => 2,
        }
    }
}
