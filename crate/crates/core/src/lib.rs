//! Convolutional (`DeepConv`) and spectral (`DeepFFT`) classifiers that assign
//! virtual machines to behavior classes from their multivariate
//! resource-usage time series.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`]: dense tensors with hand-written forward/backward passes for
//!   conv1d, batch normalization, ReLU, linear layers, softmax cross-entropy,
//!   the Adam optimizer and a finite-difference gradient checker.
//! * [`spectral`]: radix-2 FFT and the magnitude-spectrum input block.
//! * [`model`]: network assembly from the block-count rule, whole-batch
//!   forward/backward and the `DVMW` weight container.
//! * [`data`]: CSV ingestion, windowing, normalization, balanced splitting
//!   and a synthetic two-class trace generator.
//! * [`training`]: the epoch loop with reduce-on-plateau scheduling,
//!   validation-based model selection, evaluation and window sweeps.
//! * [`checks`]: finite-difference self-checks of every differentiable part.
//!
//! Batch-level loops run on rayon when the `parallel` feature is enabled
//! (the default). Every parallel section partitions work so that each output
//! element is produced by exactly one task with a fixed summation order, so
//! results are bit-identical to the sequential build.

pub mod checks;
pub mod data;
pub mod error;
pub mod model;
pub(crate) mod par;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
