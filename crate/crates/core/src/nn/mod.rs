//! Simplified CNN-VAE: three conv blocks, global average pooling, a `z_mean`
//! latent projection (optional `z_log_var` twin) and a dense sigmoid classifier.

pub mod checkpoint;
pub mod layers;
mod model;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, header_len, FORMAT_VERSION, MAGIC};
pub use model::{
    build_model, ForwardCache, Gradients, LayerSpec, Mode, Model, ModelConfig, ParamCounts,
    DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM,
};
