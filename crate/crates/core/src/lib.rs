//! Image-classification experimentation toolkit built around patch-shuffle
//! preprocessing: a from-scratch CNN with backpropagation, a deterministic
//! image pipeline (resize, augmentation, patch shuffling), directory-per-class
//! dataset handling, and a train/evaluate cross-evaluation harness.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod imageio;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
