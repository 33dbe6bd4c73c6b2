use std::io;
use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
///
/// Variants are grouped by how a caller is expected to react; the CLI maps
/// them onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("unsupported instance: {0}")]
    Unsupported(String),
    #[error("incompatible: {0}")]
    Incompatible(String),
    #[error("corrupt data: {0}")]
    Corruption(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("not comparable: {0}")]
    NotComparable(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
