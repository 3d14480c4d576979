use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("tracklet {id} degenerates to {len} point(s) after resampling")]
    DegenerateTracklet { id: u64, len: usize },
    #[error("split error: {0}")]
    Split(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite numeric input")]
    NumericInput,
    #[error("argument error: {0}")]
    Argument(String),
    #[error("rollout diverged at decoding step {step}")]
    Divergence { step: usize },
    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),
    #[error("training aborted: {0}")]
    Aborted(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
