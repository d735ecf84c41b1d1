use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the DP-TOST library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// The discriminant of the proportion matching quadratic is negative.
    #[error("no real root: discriminant {0} is negative")]
    NoRealRoot(f64),

    #[error("insufficient draws: need at least {needed}, got {got}")]
    InsufficientDraws { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
