use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("waveform too short: {samples} samples, window needs {window}")]
    WaveformTooShort { samples: usize, window: usize },

    #[error("behind camera (z = {0})")]
    BehindCamera(f64),

    #[error("underconstrained: {found} valid correspondences, need {needed}")]
    Underconstrained { found: usize, needed: usize },

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("missing acoustic model: {0}")]
    MissingAcousticModel(PathBuf),

    #[error("not a regression network")]
    NotRegression,

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
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

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_frame(self, index: usize) -> Self {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_utterance(self, id: &str) -> Self {
        Error::Utterance {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the command line tool: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            Error::Frame { source, .. } | Error::Utterance { source, .. } => source.exit_code(),
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
