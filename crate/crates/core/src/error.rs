use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("duplicate image id `{0}` in corpus")]
    DuplicateImageId(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed mask: {0}")]
    MalformedMask(String),

    #[error("instance id overflow: {0} instances exceed the 65535 limit")]
    IdOverflow(usize),

    #[error("feature file row {row}: {reason}")]
    FeatureRow { row: usize, reason: String },

    #[error("malformed feature file: {0}")]
    FeatureFile(String),

    #[error("missing feature for key {0}")]
    MissingFeature(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },

    #[error(
        "coarse cluster {cluster} has {regions} sub-regions, fewer than K2 = {k2}; use a smaller K2"
    )]
    ClusterTooSmall {
        cluster: usize,
        regions: usize,
        k2: usize,
    },

    #[error("mask has no instances")]
    NoInstances,

    #[error("{0}")]
    Invalid(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}
