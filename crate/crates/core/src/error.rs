use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid action (region {region}, axis {axis}) for partition with {depth} regions in {dim} dimensions")]
    InvalidAction {
        region: usize,
        axis: usize,
        depth: usize,
        dim: usize,
    },

    #[error("axis {axis} of region {region} has reached the split limit of {limit}")]
    DepthLimit {
        region: usize,
        axis: usize,
        limit: u8,
    },

    #[error("cannot shrink the root partition")]
    CannotShrink,

    #[error("point {point:?} lies outside the unit cube")]
    OutOfDomain { point: Vec<f64> },

    #[error("count cache is not aligned with the partition ({counts} counted regions, {regions} regions)")]
    Misaligned { counts: usize, regions: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid partition sequence `{0}`")]
    BadSequence(String),

    #[error("invalid density spec `{spec}`: {msg}")]
    BadDensity { spec: String, msg: String },

    #[error("invalid discrepancy `{0}`")]
    BadPhi(String),

    #[error("singular mass: region {region} has zero mass where the functional divides by it")]
    SingularMass { region: usize },

    #[error("invalid hyperparameters: {0}")]
    BadHyperparams(String),

    #[error("invalid chain configuration: {0}")]
    BadConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
