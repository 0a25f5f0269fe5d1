//! Convolutional-autoencoder anomaly detection for grayscale images, built
//! without an ML framework.
//!
//! The pipeline: load or synthesize PGM images ([`data`]), train an
//! autoencoder on normal images ([`model`], [`trainer`]), score images by
//! reconstruction MSE, calibrate a threshold and evaluate with ROC/AUC
//! ([`eval`]). [`cli`] wires the stages into the `aecnn` binary.
//!
//! ```
//! use aecnn::data::{synth_image, ImageRecord, Label};
//! use aecnn::model::{build, ModelConfig, Stage};
//! use aecnn::eval::reconstruction_error;
//!
//! let cfg = ModelConfig {
//!     input_size: 16,
//!     encoder: vec![Stage::Conv(4), Stage::Pool],
//!     latent_channels: 2,
//!     decoder: vec![Stage::Upsample, Stage::Conv(4)],
//!     ..ModelConfig::default()
//! };
//! let model = build(&cfg).unwrap();
//! let img = synth_image(16, 7, Label::Normal, 0);
//! let err = reconstruction_error(&model, &img).unwrap();
//! assert!(err > 0.0);
//! # let _ = ImageRecord::new("x", img, Label::Normal).unwrap();
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use error::{CheckpointError, Error, Result};
pub use tensor::Tensor;
