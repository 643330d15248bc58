use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{init_params, loss_and_grads, ActivationPolicy, ModelConfig};
use crate::numerics::{Precision, Rng, Scalar};
use crate::training::{adamw_step, clip_grad_norm, OptimState, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub len: usize,
    pub softmax_ms_per_step: f64,
    pub cog_ms_per_step: f64,
    /// `cog_ms_per_step / softmax_ms_per_step`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub reps: usize,
    pub entries: Vec<BenchEntry>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn time_steps<T: Scalar>(config: &ModelConfig, tokens: &[usize], reps: usize) -> Result<f64> {
    let mut model = init_params::<T>(config)?;
    let mut optim = OptimState::new(&model);
    let train = TrainConfig::default();
    let mut one_step = || -> Result<f64> {
        let start = Instant::now();
        let (_, mut grads) = loss_and_grads(&model, tokens)?;
        clip_grad_norm(&mut grads, train.clip_norm)?;
        adamw_step(&mut model, &grads, &mut optim, train.lr_peak, &train)?;
        Ok(start.elapsed().as_secs_f64() * 1e3)
    };
    one_step()?;
    let times = (0..reps).map(|_| one_step()).collect::<Result<Vec<_>>>()?;
    Ok(median(times))
}

/// Median wall time of a full training step (forward, backward, clip,
/// AdamW) on one sequence of each length, for an all-softmax model and for
/// the same model with Cog attention in every layer but the first and
/// last. One untimed warmup step precedes each measurement.
pub fn timing_bench(config: &ModelConfig, lengths: &[usize], reps: usize) -> Result<BenchReport> {
    if reps < 3 {
        return Err(Error::Config(format!("timing needs at least 3 repetitions, got {reps}")));
    }
    config.validate()?;
    let mut entries = Vec::with_capacity(lengths.len());
    for &len in lengths {
        if len < 2 || len > config.context_len {
            return Err(Error::ContextOverflow {
                len,
                context: config.context_len,
            });
        }
        let mut rng = Rng::named(config.seed, "bench-tokens");
        let tokens: Vec<usize> = (0..len).map(|_| rng.below(config.vocab_size)).collect();
        let time = |policy: ActivationPolicy| -> Result<f64> {
            let c = ModelConfig {
                activation_policy: policy,
                ..config.clone()
            };
            match c.precision {
                Precision::Single => time_steps::<f32>(&c, &tokens, reps),
                Precision::Double => time_steps::<f64>(&c, &tokens, reps),
            }
        };
        let softmax = time(ActivationPolicy::AllSoftmax)?.max(f64::MIN_POSITIVE);
        let cog = time(ActivationPolicy::CogExceptFirstAndLast)?.max(f64::MIN_POSITIVE);
        entries.push(BenchEntry {
            len,
            softmax_ms_per_step: softmax,
            cog_ms_per_step: cog,
            ratio: cog / softmax,
        });
    }
    Ok(BenchReport { reps, entries })
}
