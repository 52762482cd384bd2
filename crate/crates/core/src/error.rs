use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("sentence {sentence}: {message}")]
    Structure { sentence: String, message: String },

    #[error("example {id}: {message}")]
    Schema { id: String, message: String },

    #[error("{0}")]
    Dimension(String),

    #[error("{0}")]
    Numeric(String),

    #[error("{0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Format { .. } => "format",
            Error::Structure { .. } => "structure",
            Error::Schema { .. } => "schema",
            Error::Dimension(_) => "dimension",
            Error::Numeric(_) => "numeric",
            Error::Input(_) => "input",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
