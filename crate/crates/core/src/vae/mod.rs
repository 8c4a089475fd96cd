//! Convolutional variational autoencoder for brushstroke images.
//!
//! The encoder stacks resampling blocks (conv, batch norm, leaky rectifier)
//! each followed by a residual skip capsule; affine heads give the latent
//! mean and log-variance. The decoder mirrors it with transposed
//! convolutions and ends in a sigmoid. Gradients are computed by hand.

pub mod checkpoint;
pub mod corpus;
pub mod layers;
mod model;
mod train;

pub use model::{
    kl_divergence, loss, loss_from_logits, reparameterize, sigmoid, ForwardPass, LossTerms, VaeConfig, VaeModel,
};
pub use train::{history_csv, reconstruct, sample, train, train_tensor, train_with_progress, Adam, EpochStats};

use crate::data::images::StrokeImage;
use crate::error::Result;
use layers::Tensor;

/// Latent means and log-variances for a batch of stroke images.
pub fn encode(model: &VaeModel, images: &[StrokeImage]) -> Result<(Tensor, Tensor)> {
    model.encode(&train::images_to_tensor(images))
}

/// Stroke images for a batch of latent codes (`batch × latent_dim`).
pub fn decode(model: &VaeModel, z: &Tensor) -> Result<Vec<StrokeImage>> {
    train::tensor_to_images(&model.decode(z)?)
}
