use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("write ratio is undefined for an empty interval")]
    EmptyCounts,

    #[error(
        "capacity {capacity} blocks cannot honor minimum allocations totalling {required} blocks"
    )]
    Capacity { capacity: u64, required: u64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors caused by bad input data or configuration, as
    /// opposed to failures while doing the work.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
