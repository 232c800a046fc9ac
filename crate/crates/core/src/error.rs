use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown reference frame `{0}`")]
    UnknownFrame(String),

    #[error("frames `{from}` and `{to}` share no common ancestor")]
    DisconnectedFrames { from: String, to: String },

    #[error("invalid frame tree: {0}")]
    InvalidFrameTree(String),

    #[error("tick {tick} out of range [0, {max}]")]
    TickOutOfRange { tick: u64, max: u64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("innovation covariance is numerically singular (min eigenvalue {min_eigenvalue:e})")]
    SingularInnovation { min_eigenvalue: f64 },

    #[error("covariance is singular or not positive definite")]
    SingularCovariance,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("run `{run}`: {source}")]
    Run {
        run: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: path.into().display().to_string(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration rather than the run itself.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Parse { .. } | Error::Validation(_) => true,
            Error::Run { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
