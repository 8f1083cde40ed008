use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: file contains no records", .0.display())]
    EmptyInput(PathBuf),

    #[error("dataset is empty after removing users without social links")]
    EmptyDataset,

    #[error("{0}")]
    Config(String),

    #[error("node {index} out of range (graph has {len} nodes)")]
    Lookup { index: usize, len: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite gradient in parameter group {0}")]
    NonFiniteGradient(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure during computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::EmptyInput(_)
                | Error::EmptyDataset
                | Error::Config(_)
                | Error::Io { .. }
                | Error::Json { .. }
        )
    }
}
