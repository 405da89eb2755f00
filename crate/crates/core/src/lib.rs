//! Penalty-kick direction anticipation pipeline.
//!
//! The crate is organized along the pipeline stages:
//!
//! - [`dataset`]: annotated clip manifest, label regimes, dataset summaries
//! - [`preprocess`]: context constraint (kicker box composited onto the
//!   average frame) and run/kick stage segmentation
//! - [`embedding`]: stride-1 chunking, pluggable embedding backends,
//!   average/max pooling, binary embedding cache
//! - [`classifier`]: two-stream fully connected fusion network trained with
//!   class-weighted cross entropy and exact analytic gradients
//! - [`evaluation`]: stratified k-fold cross validation, metrics, goalkeeper
//!   baseline, per-family distribution summaries
//! - [`synth`]: deterministic synthetic datasets for tests and dry runs
//!
//! Numeric code is generic over the scalar type via [`num::Real`]; the
//! aliases below fix the concrete precisions used by the shipped pipeline.

pub mod classifier;
pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod num;
pub mod preprocess;
pub mod synth;

/// Precision used for training and evaluation math.
pub type Scalar = f64;

/// Precision used for embedding storage (matches the cache file format).
pub type EmbedScalar = f32;
