use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("result dimensions overflow: {0}")]
    Capacity(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// The normal equations have no unique solution (too few pilots or a
    /// rank-deficient operator).
    #[error("ill-posed problem: {0}")]
    IllPosed(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
