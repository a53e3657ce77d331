use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("overlap before model evaluation (gap = {gap} m)")]
    Overlap { gap: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Record(#[from] avscv_core::Error),
}
