use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate chunk id `{0}`")]
    DuplicateId(String),

    #[error("row {row}: unknown label character `{ch}`")]
    BadLabel { row: usize, ch: char },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {msg}")]
    FormatMismatch { path: PathBuf, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot split {items} items into {folds} folds")]
    TooFewItems { items: usize, folds: usize },

    #[error("unknown chunk id `{0}`")]
    UnknownId(String),

    #[error("bad size: {0}")]
    BadSize(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid frequency range: {0}")]
    BadRange(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("mixing alpha must be > 0, got {0}")]
    BadAlpha(f64),

    #[error("cannot augment an empty batch")]
    EmptyBatch,

    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("class {0} has no positive or no negative examples")]
    DegenerateClass(usize),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::BadAlpha(_) => 2,
            Error::NonFiniteGradient(_) | Error::NonFiniteLoss { .. } => 4,
            _ => 3,
        }
    }
}
