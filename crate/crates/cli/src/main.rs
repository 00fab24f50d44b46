mod describe;
mod eval;
mod infer;
mod manifest;
mod synth;
mod train;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Multi-level contextual network for binary biomedical image segmentation.
#[derive(Debug, Parser)]
#[command(name = "mlcseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Print the layer table, parameter count, model size and receptive fields.
    Describe(describe::DescribeArgs),
    /// Write a synthetic image/mask dataset and its manifest.
    Synth(synth::SynthArgs),
    /// Cross-validated training with held-out evaluation.
    Train(train::TrainArgs),
    /// Predict masks for images with a trained checkpoint.
    Infer(infer::InferArgs),
    /// Score predicted masks against ground truth.
    Eval(eval::EvalArgs),
    /// Re-execute the command recorded in a run manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct RerunArgs {
    /// run.json written by a previous command.
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Describe(_) => "describe",
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Infer(_) => "infer",
            Command::Eval(_) => "eval",
            Command::Rerun(_) => "rerun",
        }
    }
}

fn run(command: Command) -> Result<()> {
    let started = manifest::now_ms();
    match &command {
        Command::Describe(a) => describe::run(a, &command, started),
        Command::Synth(a) => synth::run(a, &command, started),
        Command::Train(a) => train::run(a, &command, started),
        Command::Infer(a) => infer::run(a, &command, started),
        Command::Eval(a) => eval::run(a, &command, started),
        Command::Rerun(a) => {
            let recorded = manifest::RunManifest::load(&a.manifest)?;
            let mut inner = recorded.invocation;
            if let Some(out) = &a.out {
                inner.set_out(out.clone())?;
            }
            if matches!(inner, Command::Rerun(_)) {
                bail!(
                    "{}: a rerun manifest cannot point at another rerun",
                    a.manifest.display()
                );
            }
            eprintln!(
                "re-running `{}` from {}",
                inner.name(),
                a.manifest.display()
            );
            run(inner)
        }
    }
}

impl Command {
    fn set_out(&mut self, out: PathBuf) -> Result<()> {
        match self {
            Command::Describe(a) => a.out = Some(out),
            Command::Synth(a) => a.out = out,
            Command::Train(a) => a.out = out,
            Command::Infer(a) => a.out = out,
            Command::Eval(a) => a.out = out,
            Command::Rerun(_) => bail!("rerun has no output directory"),
        }
        Ok(())
    }
}

/// `MLCSEG_THREADS` caps the worker pool; 1 gives single-threaded runs.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("MLCSEG_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("MLCSEG_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    configure_threads()?;
    run(cli.command)
}
