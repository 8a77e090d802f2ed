//! Early meme-virality prediction.
//!
//! The pipeline ingests tracked posts, labels them with a data-driven hybrid
//! engagement score, extracts window-scoped features, and trains and
//! evaluates classifiers on a chronological split.

pub mod collector;
pub mod dense;
pub mod eval;
pub mod experiments;
pub mod features;
pub mod ingest;
pub mod labeling;
pub mod models;
pub mod preprocess;
pub mod scalar;
pub mod synth;

pub use dense::DenseMatrix;
pub use scalar::Scalar;

/// Double-precision labeling artifacts (the pipeline default).
pub type NormalizationCaps = labeling::NormalizationCaps<f64>;
pub type HybridWeights = labeling::HybridWeights<f64>;
pub type ViralityThreshold = labeling::ViralityThreshold<f64>;

/// Single-precision variants of the generic labeling types.
pub type NormalizationCapsF32 = labeling::NormalizationCaps<f32>;
pub type HybridWeightsF32 = labeling::HybridWeights<f32>;
pub type ViralityThresholdF32 = labeling::ViralityThreshold<f32>;
