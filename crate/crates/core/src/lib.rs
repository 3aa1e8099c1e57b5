//! Joint deep cross-domain transfer learning for emotion recognition.
//!
//! This crate is the allocation-only core: dense tensors and hand-derived
//! layer gradients, the classification and contrastive losses, the
//! convolutional feature extractor with two classifier heads, the log-Mel
//! audio front-end, dataset sampling, the staged training loops and the
//! evaluation metrics. It performs no IO; file formats that need a
//! filesystem live in the `jdcl` companion crate, which also carries the CLI.
//!
//! Everything is computed in `f64` and every random draw comes from an
//! explicitly seeded generator, so training runs are bit-reproducible.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod audio;
pub mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod rng;
pub mod suite;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// The six emotion classes, in label-index order.
pub const EMOTIONS: [&str; 6] = ["anger", "disgust", "fear", "happiness", "sadness", "surprise"];

/// Number of emotion classes.
pub const NUM_CLASSES: usize = EMOTIONS.len();
