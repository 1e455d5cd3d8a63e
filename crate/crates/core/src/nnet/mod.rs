//! A small from-scratch neural-network engine: dense and convolutional
//! layers, ReLU/sigmoid/softmax, cross-entropy and MSE losses, Adam,
//! backpropagation, finite-difference gradient checking and a seeded
//! training loop.
//!
//! All computation is per example in `f64`; batches are reduced
//! sequentially so training is bit-reproducible for a fixed seed.

pub mod adam;
pub mod gradcheck;
pub mod layer;
pub mod network;
pub mod ops;
pub mod persist;
pub mod tensor;
pub mod train;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, min_kink_distance, GradCheckReport};
pub use layer::LayerSpec;
pub use network::{Activations, Gradients, Network};
pub use ops::{accuracy, cross_entropy, relu, softmax, Loss, Target};
pub use persist::{decode_network, encode_network, NetworkFiles};
pub use tensor::Tensor;
pub use train::{evaluate, train, EpochRecord, Example, TrainConfig, TrainingHistory};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch at layer {layer}: {reason}")]
    ShapeMismatch { layer: String, reason: String },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("activations do not match this network")]
    StaleActivations,
    #[error("epsilon must be finite and > 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("model file: {0}")]
    Persist(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
