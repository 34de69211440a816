//! Echogram segmentation toolkit.
//!
//! Reads echosounder exports, preprocesses them into model-ready inputs and
//! targets, trains a U-Net style segmentation network with a hand-written
//! reverse-mode backward pass, turns network outputs back into boundary lines
//! and regions, and evaluates the results against classical line pickers.
//!
//! Module map:
//!
//! * [`formats`]: Sv CSV, line (EVL), region (EVR) and shard-store IO.
//! * [`preprocess`]: regridding, orientation, target construction, surface
//!   cleaning, passive and bad-data detection.
//! * [`augment`]: normalization and training-time augmentation.
//! * [`nnet`]: the segmentation network and its gradients.
//! * [`train`]: loss, schedule, optimizer and batch assembly.
//! * [`infer`]: line extraction, zoom+repeat and region post-processing.
//! * [`baseline`]: threshold-offset and best-bottom-candidate pickers.
//! * [`metrics`]: IoU, MAE, RMSE, error CDFs and aggregation.
//! * [`synth`]: synthetic recordings with exact ground truth.

// Negated float comparisons are used on purpose so NaN fails validation;
// index loops read more clearly over several parallel buffers.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod api;
pub mod augment;
pub mod baseline;
pub mod error;
pub mod formats;
pub mod infer;
pub mod matrix;
pub mod metrics;
pub mod nnet;
pub mod pipeline;
pub mod plot;
pub mod preprocess;
pub mod stats;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use preprocess::{BoundaryLine, Echogram, Orientation, PingInterval, SegmentationTargets};
