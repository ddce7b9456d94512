use thiserror::Error;

/// Errors raised by the unranking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown query id `{0}`")]
    UnknownQuery(String),
    #[error("unknown document id `{0}`")]
    UnknownDoc(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("missing substitutes for {} forget pair(s): {}", .0.len(), .0.join(", "))]
    MissingSubstitutes(Vec<String>),
    #[error("invalid substitute: {0}")]
    InvalidSubstitute(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {layer}")]
    NonFinite { layer: &'static str },
    #[error("non-finite loss at epoch {epoch}, item {item}")]
    Diverged { epoch: usize, item: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
