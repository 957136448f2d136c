//! binsight: binary files in, malware-family predictions out.
//!
//! The pipeline mirrors the classic image-based classification recipe: a
//! file's bytes become a grayscale image, the image is resized to a small
//! square and flattened into a fixed-length byte vector, and a random forest
//! trained on labeled vectors assigns families. The [`eval`] module carries
//! the measurement protocol (stratified splits, k-fold cross-validation,
//! accuracy/kappa with exact binomial bounds, confusion matrices).
//!
//! Everything randomized is seeded and reproducible bit-for-bit regardless
//! of thread count; see [`rng`] for the generator contract.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod forest;
pub mod rng;

pub use dataset::{Dataset, DatasetBuilder, LabeledSample, SplitResult};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, CVResult, EvalReport};
pub use featurize::{FeatureConfig, FeatureVector, GrayImage, Interpolation, WidthRule};
pub use forest::{ForestConfig, ForestModel};
