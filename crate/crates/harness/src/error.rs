use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] topoproj::Error),

    #[error("{path}: line {line}, column {column:?}: {message}")]
    Parse { path: PathBuf, line: u64, column: String, message: String },

    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{0}: no data rows")]
    EmptyFile(PathBuf),

    #[error("invalid experiment configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
