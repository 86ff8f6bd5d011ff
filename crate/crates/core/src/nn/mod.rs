//! From-scratch network: layer primitives, the attention-pooled conv model,
//! Adam, finite-difference gradient checks and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;

pub use adam::{AdamConfig, AdamState, TrainState};
pub use layers::Tensor;
pub use model::{
    attention_pool, bce_loss, derive_depth, features_to_tensor, mean_bce, ConvBlockParams, Dropout, ForwardCache,
    Gradients, Mode, ModelConfig, ModelParams,
};
