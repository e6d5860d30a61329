use std::fmt;
use std::path::PathBuf;

/// A single problem found while reading a corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub sentence: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sentence {} line {}: {}", self.sentence, self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller passed something outside an operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Every position of a softmax was masked out.
    #[error("degenerate neighborhood: all positions masked")]
    DegenerateNeighborhood,

    #[error("config error: key {key}: {message}")]
    Config { key: String, message: String },

    #[error("{} corpus violation(s); first: {}", .0.len(), .0[0])]
    Corpus(Vec<Violation>),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: field {field}: {message}")]
    Checkpoint { field: String, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    pub(crate) fn checkpoint(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Checkpoint { field: field.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
