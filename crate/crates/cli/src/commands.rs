use std::path::{Path, PathBuf};

use cogattn::model::{init_params, Cogformer};
use cogattn::probes::{
    attn_diagnostics, collapse_probe_with, export_attention_maps, timing_bench, ProbeTask, Representation,
};
use cogattn::training::{
    checkpoint_precision, load_checkpoint, read_corpus, run_to_completion, Checkpoint, StepStats, Trainer,
};
use cogattn::{Precision, Scalar};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;

pub const ECHO_FILE: &str = "effective_config.json";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Writes the fully resolved settings of a command next to its outputs.
fn echo(out_dir: &Path, command: &str, settings: serde_json::Value) -> Result<(), CliError> {
    create_dir(out_dir)?;
    write_json(&out_dir.join(ECHO_FILE), &json!({ "command": command, "settings": settings }))
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

pub fn gen_corpus(bytes: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(out, cogattn::corpus::synthetic_corpus(bytes, seed))
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {bytes} bytes to {}", out.display());
    Ok(())
}

fn print_step(s: &StepStats, log_every: usize, total: usize) {
    if s.step % log_every == 0 || s.step + 1 == total {
        eprintln!(
            "step {:>6}  loss {:.4}  lr {:.3e}  |g| {:.3}  {:.1} ms",
            s.step, s.loss, s.lr, s.grad_norm, s.wall_ms
        );
    }
}

fn train_typed<T: Scalar>(config: &RunConfig, corpus: Vec<u8>, resume: Option<&Path>) -> Result<(), CliError> {
    let trainer = match resume {
        Some(path) => {
            let ck: Checkpoint<T> = load_checkpoint(path)?;
            if ck.model.config != config.model {
                return Err(CliError::Usage(format!(
                    "model config in {} differs from the run config",
                    path.display()
                )));
            }
            let mut ck = ck;
            ck.train_config = Some(config.train.clone());
            Trainer::from_checkpoint(ck, corpus)?
        }
        None => Trainer::new(init_params::<T>(&config.model)?, config.train.clone(), corpus)?,
    };
    let (log_every, total) = (config.train.log_every, config.train.total_steps);
    let out = run_to_completion(trainer, Some(&config.paths.out_dir), |s| print_step(s, log_every, total))?;
    if let Some(last) = out.trace.records.last() {
        println!("final loss {:.4} at step {}", last.loss, last.step);
    }
    for p in &out.checkpoints {
        println!("checkpoint {}", p.display());
    }
    println!("trace {}", config.paths.out_dir.join("loss.jsonl").display());
    Ok(())
}

pub fn train(config: &RunConfig, resume: Option<&Path>) -> Result<(), CliError> {
    let corpus_path = config
        .paths
        .corpus
        .as_deref()
        .ok_or_else(|| CliError::Usage("paths.corpus is required for training".into()))?;
    require_file(corpus_path, "corpus")?;
    if let Some(r) = resume {
        require_file(r, "checkpoint")?;
    }
    echo(&config.paths.out_dir, "train", serde_json::to_value(config)?)?;
    let corpus = read_corpus(corpus_path)?;
    match config.model.precision {
        Precision::Single => train_typed::<f32>(config, corpus, resume),
        Precision::Double => train_typed::<f64>(config, corpus, resume),
    }
}

pub enum AnyModel {
    Single(Cogformer<f32>),
    Double(Cogformer<f64>),
}

macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            AnyModel::Single($m) => $body,
            AnyModel::Double($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        require_file(path, "checkpoint")?;
        Ok(match checkpoint_precision(path)? {
            Precision::Single => AnyModel::Single(load_checkpoint::<f32>(path)?.model),
            Precision::Double => AnyModel::Double(load_checkpoint::<f64>(path)?.model),
        })
    }

    pub fn config(&self) -> &cogattn::ModelConfig {
        with_model!(self, m => &m.config)
    }
}

pub struct ProbeArgs {
    pub checkpoint: PathBuf,
    pub task: ProbeTask,
    pub ns: Vec<usize>,
    pub reference: usize,
    pub representation: Representation,
    pub out_dir: PathBuf,
}

pub fn probe(args: &ProbeArgs) -> Result<(), CliError> {
    let model = AnyModel::load(&args.checkpoint)?;
    echo(
        &args.out_dir,
        "probe",
        json!({
            "checkpoint": args.checkpoint,
            "task": args.task,
            "n": args.ns,
            "reference_n": args.reference,
            "representation": args.representation,
            "model": model.config(),
        }),
    )?;
    let report = with_model!(&model, m => collapse_probe_with(m, args.task, &args.ns, args.reference, args.representation))?;
    let name = match args.task {
        ProbeTask::FindingZero => "probe_finding_zero.json",
        ProbeTask::CountingOnes => "probe_counting_ones.json",
    };
    let path = args.out_dir.join(name);
    write_json(&path, &report)?;
    println!("{:?} on {} (reference n = {})", report.task, report.model_tag, report.reference_n);
    if report.reconstruction {
        println!("note: this task's sequence construction is a reconstruction");
    }
    println!("{:>8}  {:>12}  {:>10}", "n", "linf", "normalized");
    for e in &report.entries {
        println!("{:>8}  {:>12.6e}  {:>10.4}", e.n, e.linf_norm, e.normalized);
    }
    println!("report {}", path.display());
    Ok(())
}

pub fn diagnose(checkpoint: &Path, text: &str, out_dir: &Path) -> Result<(), CliError> {
    let model = AnyModel::load(checkpoint)?;
    echo(
        out_dir,
        "diagnose",
        json!({ "checkpoint": checkpoint, "text_bytes": text.len(), "model": model.config() }),
    )?;
    let report = with_model!(&model, m => attn_diagnostics(m, text))?;
    let path = out_dir.join("diagnostics.json");
    write_json(&path, &report)?;
    println!(
        "{:>5} {:>4} {:>8} {:>8} {:>8} {:>8} {:>5} {:>8}",
        "layer", "head", "act", "sink", "neg", "rowsum", "degen", "ov_pos"
    );
    for h in &report.heads {
        let ov = h.ov_positivity.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:>5} {:>4} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>5} {:>8}",
            h.layer,
            h.head,
            format!("{:?}", h.activation).to_lowercase(),
            h.stats.sink_score,
            h.stats.neg_fraction,
            h.stats.row_sum_max,
            h.stats.degenerate_row_count,
            ov
        );
    }
    println!("report {}", path.display());
    Ok(())
}

pub fn bench(config: &RunConfig, lengths: &[usize], reps: usize) -> Result<(), CliError> {
    let out_dir = &config.paths.out_dir;
    echo(
        out_dir,
        "bench",
        json!({ "model": config.model, "lengths": lengths, "reps": reps }),
    )?;
    let report = timing_bench(&config.model, lengths, reps)?;
    let path = out_dir.join("bench.json");
    write_json(&path, &report)?;
    println!("{:>6}  {:>12}  {:>12}  {:>7}", "len", "softmax ms", "cog ms", "ratio");
    for e in &report.entries {
        println!(
            "{:>6}  {:>12.3}  {:>12.3}  {:>7.3}",
            e.len, e.softmax_ms_per_step, e.cog_ms_per_step, e.ratio
        );
    }
    println!("report {}", path.display());
    Ok(())
}

pub fn export_attn(checkpoint: &Path, text: &str, out_dir: &Path) -> Result<(), CliError> {
    let model = AnyModel::load(checkpoint)?;
    echo(
        out_dir,
        "export-attn",
        json!({ "checkpoint": checkpoint, "text_bytes": text.len(), "model": model.config() }),
    )?;
    let paths = with_model!(&model, m => export_attention_maps(m, text, out_dir))?;
    println!("wrote {} attention maps to {}", paths.len(), out_dir.display());
    Ok(())
}
