use std::path::PathBuf;

use abe_core::AbeError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("missing resource: {}", path.display())]
    Missing { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] AbeError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::Missing { path }
        } else {
            CliError::Io { path, source }
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl std::fmt::Display) -> Self {
        CliError::Format {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// 0 success, 1 usage or empty input, 2 missing resource, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Empty(_) => 1,
            CliError::Missing { .. } | CliError::Io { .. } | CliError::Format { .. } => 2,
            CliError::Core(e) => match e {
                AbeError::Empty(_) | AbeError::Config(_) => 1,
                AbeError::UnsupportedRate(_) | AbeError::RateMismatch { .. } | AbeError::Model(_) => 2,
                _ => 3,
            },
        }
    }
}
