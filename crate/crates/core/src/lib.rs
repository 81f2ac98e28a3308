//! Out-of-distribution detection from intermediate feature activations.
//!
//! Activations captured at the five hook points of a residual network are
//! average-pooled to channel vectors, a single Gaussian is fitted per layer
//! over in-distribution samples, and new samples are scored by squared
//! Mahalanobis distance. A max-softmax baseline, ROC/AUC evaluation and
//! sensitivity-targeted thresholds complete the pipeline.
//!
//! The numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below are what the command-line tool uses.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod gaussian_stats;
pub mod layer;
pub mod linalg;
pub mod scalar;
pub mod scoring;
pub mod tensor_io;

pub use error::{ErrorKind, FrodoError, Result};
pub use evaluation::{
    confusion_at, rank_statistic_auc, recall_at, roc_auc, threshold_at_sensitivity, Confusion, Label,
    LabeledScore, RocPoint, RocResult,
};
pub use gaussian_stats::{
    fit_stats, load_bundle, mahalanobis_sq, pool_spatial, save_bundle, LayerStats, MomentAccumulator,
    PooledFeature, StatsBundle, DEFAULT_LAMBDA,
};
pub use layer::LayerId;
pub use linalg::SquareMatrix;
pub use scalar::Scalar;
pub use scoring::{baseline_msp, fuse, score_sample, CalibrationStats, FrodoScore, FusionRule};
pub use tensor_io::{read_manifest, read_tensor, write_manifest, write_tensor, FeatureTensor, Manifest};

pub type LayerStatsF64 = LayerStats<f64>;
pub type LayerStatsF32 = LayerStats<f32>;
pub type PooledFeatureF64 = PooledFeature<f64>;
pub type PooledFeatureF32 = PooledFeature<f32>;
pub type StatsBundleF64 = StatsBundle<f64>;
pub type FrodoScoreF64 = FrodoScore<f64>;
pub type CalibrationStatsF64 = CalibrationStats<f64>;
pub type RocResultF64 = RocResult<f64>;
pub type MatrixF64 = SquareMatrix<f64>;
