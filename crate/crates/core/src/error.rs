use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("index {index} out of range for {len} {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("duplicate index {0} in column selection")]
    DuplicateIndex(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error(
        "batch touches {batch_items} items but m = {m}; lower batch_users or raise m"
    )]
    BatchTooLarge { batch_items: usize, m: usize },
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptFile {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable class used by the CLI and the C API.
    pub fn class(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. }
            | Error::IndexOutOfRange { .. }
            | Error::DuplicateIndex(_) => "shape",
            Error::Config(_) | Error::BatchTooLarge { .. } => "config",
            Error::Data(_) => "data",
            Error::NonFinite(_) => "numeric",
            Error::CorruptFile { .. } => "corrupt",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dims(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { op, expected, got })
    }
}
