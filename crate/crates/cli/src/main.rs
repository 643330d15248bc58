//! `cogformer`: train, probe, diagnose, benchmark and visualize Cog
//! attention models.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure (NaN or infinite values during training).

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cogattn::probes::{ProbeTask, Representation};

use crate::commands::ProbeArgs;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "cogformer", version, about = "Cog attention experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON); missing fields take default values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `train.total_steps=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TextArgs {
    #[arg(long)]
    text: Option<String>,
    #[arg(long)]
    text_file: Option<PathBuf>,
}

impl TextArgs {
    fn read(&self) -> Result<String, CliError> {
        match (&self.text, &self.text_file) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(p)) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read text file {}: {e}", p.display()))),
            (None, None) => Err(CliError::Usage("provide --text or --text-file".into())),
        }
    }
}

#[derive(Args)]
struct CheckpointArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Defaults to `paths.checkpoint` from the run configuration.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Defaults to `paths.out_dir` from the run configuration.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl CheckpointArgs {
    fn resolve(&self) -> Result<(PathBuf, PathBuf), CliError> {
        let run = RunConfig::resolve(self.config.config.as_deref(), &self.config.overrides)?;
        let checkpoint = self
            .checkpoint
            .clone()
            .or(run.paths.checkpoint)
            .ok_or_else(|| CliError::Usage("no checkpoint given (--checkpoint or paths.checkpoint)".into()))?;
        Ok((checkpoint, self.out_dir.clone().unwrap_or(run.paths.out_dir)))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    FindingZero,
    CountingOnes,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoints and loss.jsonl to paths.out_dir.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Representational-collapse probe on a checkpoint.
    Probe {
        #[command(flatten)]
        target: CheckpointArgs,
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Comma-separated sequence sizes.
        #[arg(long = "n", value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        /// Size whose distance normalizes the others; must be in --n.
        #[arg(long = "ref")]
        reference: usize,
        /// Compare the residual stream before the final norm.
        #[arg(long)]
        pre_norm: bool,
    },
    /// Per-head attention statistics and OV eigenvalue positivity.
    Diagnose {
        #[command(flatten)]
        target: CheckpointArgs,
        #[command(flatten)]
        text: TextArgs,
    },
    /// Training-step timing, softmax versus Cog.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// One PPM image of attention weights per head.
    ExportAttn {
        #[command(flatten)]
        target: CheckpointArgs,
        #[command(flatten)]
        text: TextArgs,
    },
    /// Write a synthetic English-like corpus.
    GenCorpus {
        #[arg(long, default_value_t = 1 << 20)]
        bytes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, resume } => {
            let run = RunConfig::resolve(config.config.as_deref(), &config.overrides)?;
            commands::train(&run, resume.as_deref())
        }
        Command::Probe {
            target,
            task,
            ns,
            reference,
            pre_norm,
        } => {
            let (checkpoint, out_dir) = target.resolve()?;
            commands::probe(&ProbeArgs {
                checkpoint,
                task: match task {
                    TaskArg::FindingZero => ProbeTask::FindingZero,
                    TaskArg::CountingOnes => ProbeTask::CountingOnes,
                },
                ns,
                reference,
                representation: if pre_norm {
                    Representation::PreFinalNorm
                } else {
                    Representation::PostFinalNorm
                },
                out_dir,
            })
        }
        Command::Diagnose { target, text } => {
            let (checkpoint, out_dir) = target.resolve()?;
            commands::diagnose(&checkpoint, &text.read()?, &out_dir)
        }
        Command::Bench {
            config,
            lengths,
            reps,
            out_dir,
        } => {
            let mut run = RunConfig::resolve(config.config.as_deref(), &config.overrides)?;
            if let Some(dir) = out_dir {
                run.paths.out_dir = dir;
            }
            commands::bench(&run, &lengths, reps)
        }
        Command::ExportAttn { target, text } => {
            let (checkpoint, out_dir) = target.resolve()?;
            commands::export_attn(&checkpoint, &text.read()?, &out_dir)
        }
        Command::GenCorpus { bytes, seed, out } => commands::gen_corpus(bytes, seed, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
