//! Classification and severity estimation for leaf biotic stress with a
//! from-scratch multi-task convolutional network.
//!
//! The crate covers the whole experimental loop on deterministic math:
//!
//! - [`tensor`] / [`rng`] — dense float arrays with fixed accumulation order
//!   and a counter-based random source, so every run replays bitwise.
//! - [`layers`] — conv / batchnorm / pooling / dense / softmax-CE forward and
//!   backward passes, each checkable against finite differences.
//! - [`model`] / [`optim`] / [`train`] — a shared-trunk residual network with
//!   parallel classification heads (stress, severity), SGD with momentum and
//!   a stepped learning-rate schedule, best-checkpoint retention.
//! - [`imaging`] — PPM decoding, HSV segmentation of leaf and symptom
//!   regions, crop-and-resize, and severity binning from pixel ratios.
//! - [`augment`] — flips, rotation, color jitter, and mixup.
//! - [`metrics`] — confusion matrices with accuracy and macro
//!   precision/recall.
//! - [`tsne`] — exact t-SNE for 2-D feature visualization.
//! - [`dataset`] — manifest ingestion, stratified splitting, and a synthetic
//!   leaf-image generator used by the test suites.
//!
//! See the `examples/` directory for one runnable program per capability,
//! and the `leafnet` binary for the end-to-end command-line pipeline
//! (`synth` / `prepare` / `train` / `evaluate` / `embed`).

pub mod augment;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod imaging;
mod kernels;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod tsne;

pub use rng::RngStream;
pub use tensor::{Scalar, Tensor};
