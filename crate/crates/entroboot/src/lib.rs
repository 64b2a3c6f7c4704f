//! Weakly supervised nuclei detection from point annotations.
//!
//! The pipeline turns a handful of dot labels into full instance masks:
//!
//! 1. [`synth`] generates deterministic nucleus scenes with ground truth.
//! 2. [`sparsify`] reduces the instance masks to point annotations
//!    (one dot per nucleus, rasterized as small disks).
//! 3. [`bootstrap`] fits a per-pixel naive Bayes model on the sparse
//!    labels and produces a prediction-entropy map that tracks the
//!    underlying nucleus-pixel distribution.
//! 4. [`instancer`] converts the entropy map into instance masks via
//!    Voronoi edge suppression, adaptive thresholding and a
//!    marker-controlled watershed, keeping only masks co-located with
//!    the point annotations.
//! 5. [`metrics`] evaluates with Dice curves, AUROC, detection rate and
//!    COCO-style average precision.
//!
//! [`bootstrap::theory`] carries the closed-form entropy analysis behind
//! the approach and a Monte Carlo simulator for checking it.

pub mod bootstrap;
pub mod coco;
pub mod error;
pub mod instancer;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod sparsify;
pub mod synth;

pub use error::{Error, Result};
