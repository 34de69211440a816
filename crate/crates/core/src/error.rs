use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("structural error: {0}")]
    Structure(String),
    #[error("index {index} out of range for length {len}")]
    OutOfBounds { index: usize, len: usize },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite gradient in {0}")]
    NonFinite(String),
    #[error("undefined statistic: {0}")]
    Undefined(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
