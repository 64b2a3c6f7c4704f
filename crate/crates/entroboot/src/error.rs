//! Error type shared across the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in input grid")]
    NonFiniteInput,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("could not place nucleus {index}: no disjoint position found after {tries} tries")]
    PlacementFailed { index: usize, tries: usize },

    #[error("undefined epsilon: ground truth has no nucleus pixels")]
    UndefinedEpsilon,

    #[error("labels contain a single class; need at least one positive and one negative pixel")]
    SingleClassLabels,

    #[error("AUROC undefined: ground truth contains a single class")]
    AurocUndefined,

    #[error("no seeds: point set is empty")]
    NoSeeds,

    #[error("no nuclei in ground truth")]
    NoNuclei,

    #[error("IoU undefined: both inputs are empty")]
    EmptyIou,

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
