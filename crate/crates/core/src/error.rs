use std::fmt;

use crate::idrs::ReshuffleReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Stage at which message decoding gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStage {
    FormatInfo,
    ReedSolomon,
    Header,
}

impl fmt::Display for DecodeStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeStage::FormatInfo => "format info",
            DecodeStage::ReedSolomon => "reed-solomon",
            DecodeStage::Header => "header",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("message of {len} bytes exceeds capacity of {capacity} bytes")]
    Capacity { len: usize, capacity: usize },

    #[error("uncorrectable reed-solomon block")]
    Uncorrectable,

    #[error("decode failed at {stage}: {detail}")]
    Decode { stage: DecodeStage, detail: String },

    #[error("code location failed: {0}")]
    Location(String),

    #[error("reshuffle infeasible: block errors {:?} exceed capacity", .0.per_block_errors_after)]
    Infeasible(Box<ReshuffleReport>),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn decode(stage: DecodeStage, detail: impl Into<String>) -> Self {
        Error::Decode { stage, detail: detail.into() }
    }
}
