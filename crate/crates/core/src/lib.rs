// `!(x > 0.0)` is used on purpose so NaN is rejected with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

//! EEG band decomposition, time-frequency images, a from-scratch
//! convolutional autoencoder / CNN, and classifier evaluation.

pub mod cae;
pub mod classifiers;
pub mod config;
pub mod cwt;
pub mod dataset;
pub mod dwt;
pub mod error;
pub mod eval;
pub mod fft;
pub mod image;
pub mod nn;
pub mod stft;

pub use config::RunConfig;
pub use dataset::{ClassLabel, DatasetManifest, EegRecording};
pub use error::{Error, ErrorKind, Result};
pub use image::{GrayImage, Scaling};
pub use nn::{Checkpoint, Tensor};
