//! Crate-wide error type and result alias.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed event record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("events are not sorted by time (index {index}); pass sort=true to sort on load")]
    UnsortedEvents { index: usize },

    #[error("unknown mark label '{0}' not present in the mark manifest")]
    UnknownMark(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("model/data mismatch: {0}")]
    Mismatch(String),

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error(
        "training diverged: non-finite loss at epoch {epoch}, batch {batch} \
         (first raw parameters: {param_head:?})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_head: Vec<f64>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("simulation aborted: {0}")]
    Simulation(String),
}
