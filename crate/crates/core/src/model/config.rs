use serde::{Deserialize, Serialize};

use crate::attention::AttnActivation;
use crate::error::{Error, Result};
use crate::numerics::Precision;

/// Which layers use Cog attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationPolicy {
    AllSoftmax,
    AllCog,
    /// Softmax in layer 0, Cog elsewhere.
    CogExceptFirst,
    /// Softmax in the first and last layers, Cog in between.
    CogExceptFirstAndLast,
}

impl ActivationPolicy {
    pub fn tag(self) -> &'static str {
        match self {
            ActivationPolicy::AllSoftmax => "all_softmax",
            ActivationPolicy::AllCog => "all_cog",
            ActivationPolicy::CogExceptFirst => "cog_except_first",
            ActivationPolicy::CogExceptFirstAndLast => "cog_except_first_and_last",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub context_len: usize,
    pub rope_base: f64,
    pub norm_eps: f64,
    pub activation_policy: ActivationPolicy,
    pub qk_scale_enabled: bool,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 384,
            vocab_size: 256,
            context_len: 256,
            rope_base: 10_000.0,
            norm_eps: 1e-5,
            activation_policy: ActivationPolicy::CogExceptFirstAndLast,
            qk_scale_enabled: true,
            precision: Precision::Single,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return fail("n_layers, n_heads, d_model and d_ff must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.head_dim() % 2 != 0 {
            return fail(format!("head dimension {} must be even for rotary embedding", self.head_dim()));
        }
        if self.context_len < 2 {
            return fail(format!("context_len must be at least 2, got {}", self.context_len));
        }
        if self.vocab_size < 2 {
            return fail(format!("vocab_size must be at least 2, got {}", self.vocab_size));
        }
        if !(self.rope_base > 0.0) || !(self.norm_eps >= 0.0) {
            return fail("rope_base must be positive and norm_eps non-negative".into());
        }
        Ok(())
    }

    /// Parameter count of an untied model with this config.
    pub fn param_count(&self, tied: bool) -> usize {
        let (v, d, f, l) = (self.vocab_size, self.d_model, self.d_ff, self.n_layers);
        let per_layer = 2 * d + 4 * d * d + 3 * d * f;
        let unembed = if tied { 0 } else { d * v };
        v * d + l * per_layer + d + unembed
    }
}

/// Activation used by layer `layer_idx` under the config's policy.
pub fn layer_activation(layer_idx: usize, config: &ModelConfig) -> Result<AttnActivation> {
    let n = config.n_layers;
    if layer_idx >= n {
        return Err(Error::LayerIndex {
            index: layer_idx,
            n_layers: n,
        });
    }
    let softmax = match config.activation_policy {
        ActivationPolicy::AllSoftmax => true,
        ActivationPolicy::AllCog => false,
        ActivationPolicy::CogExceptFirst => layer_idx == 0,
        ActivationPolicy::CogExceptFirstAndLast => layer_idx == 0 || layer_idx == n - 1,
    };
    Ok(if softmax {
        AttnActivation::Softmax
    } else {
        AttnActivation::Cog
    })
}
