use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration or CLI usage.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or unusable input data.
    #[error("data error: {0}")]
    Data(String),

    /// A numeric computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("persistence error: {0}")]
    Persistence(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 2 for configuration and
    /// usage problems, 3 for bad data, 4 for internal numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Domain(_)
            | Error::Shape(_)
            | Error::Data(_)
            | Error::Persistence(_)
            | Error::UndefinedMetric(_)
            | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}
