use std::path::{Path, PathBuf};
use std::time::Instant;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::{lr_at, TrainConfig};
use super::data::{read_corpus, Batcher};
use super::optim::{adamw_step, clip_grad_norm, OptimState};
use super::trace::{LossRecord, LossTrace};
use crate::error::{Error, Result};
use crate::model::{accumulate_grads, Cogformer};
use crate::numerics::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub wall_ms: f64,
}

/// Step-at-a-time training state. Everything a step depends on is the
/// model, the optimizer moments, the config and the step counter, so a
/// trainer rebuilt from a checkpoint continues exactly where it stopped.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    model: Cogformer<T>,
    optim: OptimState<T>,
    config: TrainConfig,
    step: usize,
    batcher: Batcher,
    trace: LossTrace,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Cogformer<T>, config: TrainConfig, corpus: Vec<u8>) -> Result<Self> {
        let optim = OptimState::new(&model);
        Self::assemble(model, optim, config, 0, corpus)
    }

    pub fn from_checkpoint(checkpoint: Checkpoint<T>, corpus: Vec<u8>) -> Result<Self> {
        let config = checkpoint
            .train_config
            .ok_or_else(|| Error::Config("checkpoint has no training config; cannot resume".into()))?;
        let optim = checkpoint
            .optim
            .ok_or_else(|| Error::Config("checkpoint has no optimizer state; cannot resume".into()))?;
        Self::assemble(checkpoint.model, optim, config, checkpoint.step, corpus)
    }

    fn assemble(model: Cogformer<T>, optim: OptimState<T>, config: TrainConfig, step: usize, corpus: Vec<u8>) -> Result<Self> {
        config.validate()?;
        let ctx = model.config.context_len;
        if model.config.vocab_size < 256 {
            if let Some(&b) = corpus.iter().find(|&&b| b as usize >= model.config.vocab_size) {
                return Err(Error::OutOfVocab {
                    token: b as usize,
                    vocab: model.config.vocab_size,
                });
            }
        }
        let batcher = Batcher::new(corpus, ctx, config.sequences_per_batch(ctx), config.seed)?;
        Ok(Self {
            model,
            optim,
            config,
            step,
            batcher,
            trace: LossTrace::default(),
        })
    }

    pub fn model(&self) -> &Cogformer<T> {
        &self.model
    }

    pub fn into_model(self) -> Cogformer<T> {
        self.model
    }

    pub fn optim(&self) -> &OptimState<T> {
        &self.optim
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed steps.
    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.total_steps
    }

    pub fn trace(&self) -> &LossTrace {
        &self.trace
    }

    /// One optimizer step on the batch for the current step index.
    pub fn step(&mut self) -> Result<StepStats> {
        if self.is_done() {
            return Err(Error::Config(format!("training already finished at step {}", self.step)));
        }
        let start = Instant::now();
        let step = self.step;
        let lr = lr_at(step, &self.config)?;
        let batch = self.batcher.batch(step);
        let weight = 1.0 / batch.len() as f64;
        let mut grads = self.model.zeros_like();
        let mut loss = 0.0;
        for seq in &batch {
            loss += weight * accumulate_grads(&self.model, seq, &mut grads, T::of(weight))?;
        }
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        let grad_norm = clip_grad_norm(&mut grads, self.config.clip_norm)?;
        adamw_step(&mut self.model, &grads, &mut self.optim, lr, &self.config)?;
        self.step += 1;
        let stats = StepStats {
            step,
            loss,
            lr,
            grad_norm,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        if step % self.config.log_every == 0 || self.is_done() {
            self.trace.push(LossRecord {
                step,
                loss,
                lr,
                wall_ms: stats.wall_ms,
            })?;
        }
        Ok(stats)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.model, Some(&self.optim), Some(&self.config), self.step)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Cogformer<T>,
    pub trace: LossTrace,
    pub checkpoints: Vec<PathBuf>,
}

pub fn checkpoint_file_name(step: usize) -> String {
    format!("step_{step:06}.ckpt")
}

/// Trains `model` on the byte corpus at `corpus_path` for
/// `config.total_steps` steps. With an output directory, writes periodic
/// checkpoints, `final.ckpt` and `loss.jsonl` there.
pub fn train<T: Scalar>(
    model: Cogformer<T>,
    corpus_path: &Path,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    let trainer = Trainer::new(model, config.clone(), read_corpus(corpus_path)?)?;
    run_to_completion(trainer, out_dir, |_| {})
}

/// Drives `trainer` to `total_steps`, calling `on_step` after every step.
pub fn run_to_completion<T: Scalar>(
    mut trainer: Trainer<T>,
    out_dir: Option<&Path>,
    mut on_step: impl FnMut(&StepStats),
) -> Result<TrainOutcome<T>> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut checkpoints = Vec::new();
    while !trainer.is_done() {
        let stats = trainer.step()?;
        on_step(&stats);
        let every = trainer.config.ckpt_every;
        if let Some(dir) = out_dir {
            if every > 0 && trainer.step % every == 0 && !trainer.is_done() {
                let path = dir.join(checkpoint_file_name(trainer.step));
                trainer.save(&path)?;
                checkpoints.push(path);
            }
        }
    }
    if let Some(dir) = out_dir {
        let path = dir.join("final.ckpt");
        trainer.save(&path)?;
        checkpoints.push(path);
        trainer.trace.write_jsonl(&dir.join("loss.jsonl"))?;
    }
    Ok(TrainOutcome {
        trace: trainer.trace.clone(),
        model: trainer.into_model(),
        checkpoints,
    })
}
