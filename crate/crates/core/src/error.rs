use std::path::PathBuf;

use thiserror::Error;

use crate::units::ByteRange;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mapping {requested} overlaps existing mapping {existing}")]
    Overlap { requested: ByteRange, existing: ByteRange },

    #[error("access to unmapped address {0:#x}")]
    Fault(u64),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("inconsistent state: {0}")]
    Consistency(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
