use std::io;

use thiserror::Error;

/// Errors produced by the library. The CLI maps `Input`/`Parse`/`Format`/`Config`
/// to exit code 2 and everything else to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no edges")]
    NoEdges,

    #[error("invalid input: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged: {0}")]
    Diverged(String),
}

impl Error {
    /// True when the error stems from user input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::NoEdges
                | Error::Input(_)
                | Error::Config(_)
                | Error::Format(_)
                | Error::Dimension(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
