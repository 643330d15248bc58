//! Byte-level data pipeline, learning-rate schedule, AdamW, deterministic
//! training loop and checkpoints.

mod checkpoint;
mod config;
mod data;
mod optim;
mod trace;
mod trainer;

pub use checkpoint::{
    checkpoint_precision, decode_checkpoint, decode_checkpoint_header, encode_checkpoint, load_checkpoint,
    read_checkpoint_header, save_checkpoint, Checkpoint, CheckpointConfigs, CheckpointHeader, TensorEntry, MAGIC,
};
pub use config::{lr_at, TrainConfig};
pub use data::{detokenize, read_corpus, tokenize_bytes, Batcher};
pub use optim::{adamw_step, clip_grad_norm, OptimState};
pub use trace::{LossRecord, LossTrace};
pub use trainer::{checkpoint_file_name, run_to_completion, train, StepStats, TrainOutcome, Trainer};
