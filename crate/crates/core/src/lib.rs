//! Domain-guided weight modulation for semi-supervised domain
//! generalization.
//!
//! A domain-shared linear classifier is specialized per source domain by a
//! soft mask generated from the batch's mean feature vector. The mask drives
//! pseudo-labeling (noise-free) and learning (noise-injected); inference uses
//! the unmasked classifier.

pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
