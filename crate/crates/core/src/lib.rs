//! Optical/SAR change detection through iterated style transfer.
//!
//! A post-event SAR image is carried into the feature space of a pre-event
//! optical image by repeated neural style transfer: each stage keeps the
//! SAR image's deep content features and matches the optical image's Gram
//! texture statistics, and every stage after the first runs under a freshly
//! perturbed copy of the VGG-19 filter bank. The transformed image and the
//! optical image are then compared directly.
//!
//! Module map:
//!
//! * [`image`] raster type, binary PNM codec, bilinear resampling
//! * [`rng`] reproducible SplitMix64 / Box-Muller stream
//! * [`tensor`] channel-major tensors and the GEMM backend
//! * [`vggnet`] VGG-19 graph, forward/backward, weight files and randomization
//! * [`features`] content vectors, Gram matrices and their gradients
//! * [`iist`] loss, L-BFGS, one transfer stage and the iterative strategy
//! * [`detect`] difference image, Otsu, one-class SVM
//! * [`metrics`] confusion counts, accuracy / precision / recall / kappa
//! * [`synthgen`] deterministic synthetic optical/SAR pairs
//! * [`pipeline`] end-to-end helpers and the pooling / content-layer comparison

pub mod detect;
pub mod error;
pub mod features;
pub mod iist;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod synthgen;
pub mod tensor;
pub mod vggnet;

pub use detect::{ChangeMap, OcsvmModel, OcsvmParams};
pub use error::{Error, Result};
pub use features::{ContentFeatures, GramMatrix, StyleFeatures};
pub use iist::{IistConfig, IistOutput, LbfgsParams, StageRecord, StageResult};
pub use image::Image;
pub use metrics::{ConfusionCounts, MetricsReport};
pub use rng::RngStream;
pub use tensor::{Scalar, Tensor};
pub use vggnet::{ContentLayer, PoolingMode, Topology, VggWeights};
