use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The iterate displacement is zero or non-finite, so no curvature pair exists.
    #[error("degenerate step: {0}")]
    DegenerateStep(&'static str),

    /// The damped curvature product fell below the positivity floor; the pair is dropped.
    #[error("curvature pair skipped: s.y_bar = {s_dot_y_bar:e} below floor {floor:e}")]
    PairSkipped { s_dot_y_bar: f64, floor: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("numerical failure at iteration {iter}: {what}")]
    NumericalFailure { iter: u64, what: String },

    #[error("bad IDX header at byte offset {offset}: expected magic {expected:#010x}, found {found:#010x}")]
    Format {
        offset: usize,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX data: need {needed} bytes, have {available}")]
    Length { needed: usize, available: usize },

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed trajectory CSV {path}: {msg}")]
    Csv { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn numerical(iter: u64, what: impl Into<String>) -> Self {
        Error::NumericalFailure {
            iter,
            what: what.into(),
        }
    }
}
