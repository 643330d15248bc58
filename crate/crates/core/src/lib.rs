//! Cog attention: attention whose weights may be negative.
//!
//! Each row of query-key scores `p` is mapped to
//! `a_j = sign(p_j)·exp(|p_j| − max|p|) / Σ_k exp(|p_k| − max|p|)`, so the
//! absolute weights in a row sum to one while the sign of each weight
//! follows the sign of its score. The crate provides the kernels (a direct
//! and a fast equivalent evaluation plus backward passes), a small
//! decoder-only language model that mixes softmax and Cog layers, a
//! deterministic training loop with bit-exact checkpoints, and probes for
//! representational collapse, attention statistics and timing.

pub mod attention;
pub mod corpus;
mod error;
pub mod model;
pub mod numerics;
pub mod probes;
pub mod training;

pub use attention::{AttentionWeights, AttnActivation, HeadParams};
pub use error::{CheckpointError, Error, Result};
pub use model::{ActivationPolicy, Cogformer, ModelConfig};
pub use numerics::{Precision, Rng, Scalar, Tensor};
pub use probes::{BenchReport, DiagnosticsReport, ProbeReport, ProbeTask};
pub use training::{LossTrace, OptimState, TrainConfig};
