use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("label column {0} not found")]
    MissingLabelColumn(String),

    #[error("no data rows")]
    EmptyFile,

    #[error("non-finite value at line {line}, column {column}")]
    NonFinite { line: usize, column: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in layer {layer}: {what}")]
    NonFiniteIntermediate { layer: usize, what: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("unsupported format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in the data rather than the numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::MissingLabelColumn(_)
                | Error::EmptyFile
                | Error::NonFinite { .. }
                | Error::Shape(_)
                | Error::EmptyClass(_)
                | Error::Format(_)
        )
    }
}
