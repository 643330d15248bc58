//! Shared inputs for the criterion benchmarks.

use cogattn::numerics::{apply_causal_mask, randn, Rng, Scalar, Tensor};
use cogattn::{ActivationPolicy, ModelConfig, Precision};

/// Causally masked `n × n` scores with standard-normal entries.
pub fn causal_scores<T: Scalar>(n: usize, seed: u64) -> Tensor<T> {
    let p = randn(&mut Rng::new(seed, 0), &[n, n], 1.0);
    apply_causal_mask(&p).expect("square")
}

/// Small single-precision model used by the training-step benchmark.
pub fn bench_model_config(policy: ActivationPolicy, context_len: usize) -> ModelConfig {
    ModelConfig {
        n_layers: 4,
        n_heads: 4,
        d_model: 64,
        d_ff: 192,
        context_len,
        activation_policy: policy,
        precision: Precision::Single,
        ..ModelConfig::default()
    }
}

pub fn random_tokens(n: usize, vocab: usize, seed: u64) -> Vec<usize> {
    let mut rng = Rng::new(seed, 1);
    (0..n).map(|_| rng.below(vocab)).collect()
}
