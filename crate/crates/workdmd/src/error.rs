use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] workdmd_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: row {row}, column '{column}': {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("online step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: workdmd_core::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("every configuration failed: {0}")]
    AllFailed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Problems with the caller's input rather than with the computation.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Data { .. } => true,
            Error::Io { source, .. } => source.kind() == io::ErrorKind::NotFound,
            _ => false,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(_) => "numerical",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Data { .. } => "data",
            Error::Config(_) => "config",
            Error::Step { .. } => "numerical",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::AllFailed(_) => "all_failed",
        }
    }
}
