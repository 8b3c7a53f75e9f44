//! Handwritten digit recognition toolkit.
//!
//! The pipeline mirrors a classic HOG + classifier setup: MNIST IDX files are
//! parsed into [`LabeledDataset`]s, images are preprocessed and segmented with
//! [`imageproc`], described by a 36-value HOG descriptor ([`features`]) and
//! classified by one of three models: [`knn`], [`svm`] (one-vs-rest linear,
//! squared hinge) or [`mlp`]. Trained models are persisted in the line-oriented
//! `HWR1` text format ([`model_io`]) and evaluated with [`metrics`].

pub mod dataset;
pub mod features;
pub mod font;
pub mod image;
pub mod imageproc;
pub mod knn;
pub mod matrix;
pub mod metrics;
pub mod mlp;
pub mod model_io;
pub mod netpbm;
pub mod optim;
pub mod prng;
pub mod svm;

pub use dataset::{DatasetError, LabeledDataset, SplitSpec};
pub use features::{BlockNorm, FeatureError, HogParams, ScalerParams};
pub use image::{BinaryImage, BoundingBox, GrayImage, ImageError, RgbImage};
pub use knn::KnnModel;
pub use matrix::Matrix;
pub use metrics::{ClassReport, ConfusionMatrix};
pub use mlp::{MlpHyper, MlpModel};
pub use model_io::{Classifier, ModelBundle};
pub use prng::SplitMix64;
pub use svm::{LinearSvmModel, SvmHyper};

/// Class label of a handwritten digit, always in `0..=9`.
pub type Digit = u8;

/// Number of digit classes.
pub const NUM_DIGITS: usize = 10;
