use std::io;

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed AEDAT header: {0}")]
    MalformedHeader(String),

    #[error("truncated event data at byte offset {offset}")]
    TruncatedEvent { offset: usize },

    #[error("malformed event at byte offset {offset}: ({x}, {y}) outside sensor {width}x{height}")]
    MalformedEvent {
        offset: usize,
        x: u32,
        y: u32,
        width: u16,
        height: u16,
    },

    #[error("unknown subject id {0} (expected 1..=29)")]
    UnknownSubject(u32),

    #[error("unknown raw label {0} (expected 1..=11)")]
    UnknownLabel(u32),

    #[error("delay {delay} outside [0, {d_max}]")]
    DelayOutOfRange { delay: usize, d_max: usize },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(std::path::PathBuf),

    #[error("state mismatch: {0}")]
    StateMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<bincode::Error> for Error {
    fn from(e: bincode::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
