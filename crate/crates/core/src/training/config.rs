use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Tokens per optimizer step; the batch holds
    /// `max(1, batch_tokens / context_len)` windows.
    pub batch_tokens: usize,
    pub lr_peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    /// Learning rate at the end of the cosine decay, as a fraction of peak.
    pub final_lr_fraction: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub log_every: usize,
    /// 0 disables periodic checkpoints.
    pub ckpt_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_tokens: 8192,
            lr_peak: 2e-4,
            warmup_steps: 200,
            total_steps: 3000,
            final_lr_fraction: 0.04,
            betas: (0.9, 0.95),
            weight_decay: 0.1,
            clip_norm: 1.0,
            seed: 0,
            log_every: 10,
            ckpt_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(0 < self.warmup_steps && self.warmup_steps < self.total_steps) {
            return fail(format!(
                "need 0 < warmup_steps ({}) < total_steps ({})",
                self.warmup_steps, self.total_steps
            ));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return fail(format!("final_lr_fraction must be in (0, 1], got {}", self.final_lr_fraction));
        }
        if !(self.lr_peak >= 0.0) || !(self.weight_decay >= 0.0) || !(self.clip_norm > 0.0) {
            return fail("lr_peak and weight_decay must be non-negative, clip_norm positive".into());
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return fail(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if self.batch_tokens == 0 || self.log_every == 0 {
            return fail("batch_tokens and log_every must be positive".into());
        }
        Ok(())
    }

    pub fn sequences_per_batch(&self, context_len: usize) -> usize {
        (self.batch_tokens / context_len).max(1)
    }
}

/// Linear warmup to `lr_peak`, then cosine decay to
/// `final_lr_fraction · lr_peak` at `total_steps`.
pub fn lr_at(step: usize, config: &TrainConfig) -> Result<f64> {
    if step > config.total_steps {
        return Err(Error::Config(format!(
            "step {step} beyond total_steps {}",
            config.total_steps
        )));
    }
    let peak = config.lr_peak;
    if step < config.warmup_steps {
        return Ok(peak * (step + 1) as f64 / config.warmup_steps as f64);
    }
    let progress = (step - config.warmup_steps) as f64 / (config.total_steps - config.warmup_steps) as f64;
    let f = config.final_lr_fraction;
    Ok(peak * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())))
}
