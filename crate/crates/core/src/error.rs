use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("architecture: {0}")]
    Architecture(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss for sample {sample}: {detail}")]
    NonFinite { sample: usize, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
