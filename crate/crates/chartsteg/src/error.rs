use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, AppError>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] chartsteg_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// A QR symbol that could not be read; the grid cell is (row, col).
    #[error("QR symbol at grid cell ({row}, {col}) is undecodable: {reason}")]
    Qr { row: usize, col: usize, reason: String },
    /// Payload recovered from an image could not be used.
    #[error("payload lost: {0}")]
    PayloadLost(String),
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("unknown config key `{0}`")]
    ConfigKey(String),
    #[error("{0}")]
    Usage(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Self::Format {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// Process exit status: 2 for capacity refusals, 3 when the hidden
    /// payload cannot be recovered, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(chartsteg_core::Error::Capacity { .. }) => 2,
            Self::Qr { .. } | Self::PayloadLost(_) => 3,
            _ => 1,
        }
    }
}
