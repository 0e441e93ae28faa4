//! From-scratch neural network engine: layers, model stack, optimizers,
//! checkpointing, and finite-difference gradient verification.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optim;

pub use layers::{softmax, softmax_cross_entropy, Mode};
pub use model::{build_model, build_reference_model, build_toy_model, Arch, GradientSet, Model};
pub use optim::{Algorithm, Optimizer};
