//! Toy decoder-only model: embeddings, pre-norm blocks (attention and
//! SwiGLU feed-forward), per-layer activation policy, logits and loss.

mod config;
mod forward;
pub mod layers;
mod params;

pub use config::{layer_activation, ActivationPolicy, ModelConfig};
pub use forward::{accumulate_grads, cross_entropy, forward, loss_and_grads, ForwardOptions, ForwardOutput};
pub use layers::{rms_norm, rope_apply, silu, swiglu_ffn};
pub use params::{init_params, init_params_with, Cogformer, FfnParams, InitOptions, LayerParams};
