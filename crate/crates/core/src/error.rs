use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabel(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("differentiation error: {0}")]
    Differentiation(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("schedule error: iteration {iter} exceeds max_iter {max_iter}")]
    Schedule { iter: u64, max_iter: u64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numeric,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Io => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Usage => "usage",
            ErrorCategory::Data => "data",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Io => "io",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::UnknownKey(_) => ErrorCategory::Usage,
            Error::Dimension(_)
            | Error::Ingestion(_)
            | Error::DegenerateLabel(_)
            | Error::Evaluation(_)
            | Error::Format { .. } => ErrorCategory::Data,
            Error::Differentiation(_) | Error::Numeric(_) | Error::Schedule { .. } => ErrorCategory::Numeric,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
