use thiserror::Error;

use crate::substrate::{CheckpointError, SubstrateError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Substrate(#[from] SubstrateError),
    #[error(transparent)]
    Metric(#[from] cavp_metrics::MetricError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("empty action space")]
    EmptyActionSpace,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
