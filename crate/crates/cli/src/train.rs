use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use mlcseg::data::{kfold_split, read_manifest, FoldPlan, Sample};
use mlcseg::metrics::{evaluate_image, EvalReport, FoldRecord};
use mlcseg::nn::ModelConfig;
use mlcseg::optim::AdamHyper;
use mlcseg::seed;
use mlcseg::train::{split_fold, train_with, Selection, TrainRunConfig};
use mlcseg::MlcNet32;
use serde::{Deserialize, Serialize};

use crate::infer::predict_image;
use crate::manifest::{create_dir, resolve_config, write_json, RunManifest};
use crate::Command;

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_LOG_FILE: &str = "loss.tsv";
pub const FOLDS_FILE: &str = "folds.tsv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Model configuration (TOML); the reference configuration if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest: `id<TAB>image<TAB>mask` lines.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed; split, init, shuffle, augment and dropout streams derive from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cross-validation folds; 1 trains on everything and scores the training set.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Run only this fold instead of all of them.
    #[arg(long)]
    pub fold_index: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Disable on-the-fly flips and rescaling.
    #[arg(long)]
    pub no_augment: bool,
    /// Keep the parameters after the last step rather than the best epoch.
    #[arg(long)]
    pub keep_last: bool,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

impl TrainArgs {
    fn run_config(&self) -> TrainRunConfig {
        TrainRunConfig {
            max_epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            max_steps: self.max_steps,
            augment: !self.no_augment,
            adam: AdamHyper {
                lr: self.lr,
                ..AdamHyper::default()
            },
            selection: if self.keep_last {
                Selection::Last
            } else {
                Selection::BestLoss
            },
        }
    }
}

fn score(net: &MlcNet32, fold: usize, samples: &[Sample], threshold: f64) -> Result<FoldRecord> {
    let mut images = Vec::with_capacity(samples.len());
    for s in samples {
        let prob =
            predict_image(net, &s.image, true).with_context(|| format!("predicting `{}`", s.id))?;
        images.push(evaluate_image(&s.id, &prob, &s.mask, threshold)?);
    }
    Ok(FoldRecord::new(fold, images)?)
}

fn train_one(
    args: &TrainArgs,
    config: &ModelConfig,
    fold: usize,
    train_set: &[Sample],
    heldout: &[Sample],
    eval_set: &[Sample],
) -> Result<FoldRecord> {
    let dir = args.out.join(format!("fold{fold}"));
    create_dir(&dir)?;
    let mut net = MlcNet32::new(config.clone(), seed::derive(args.seed, seed::INIT))?;
    eprintln!(
        "fold {fold}: {} training / {} held-out samples",
        train_set.len(),
        heldout.len()
    );
    let outcome = train_with(
        &mut net,
        train_set,
        heldout,
        &args.run_config(),
        |e| match e.val_loss {
            Some(v) => eprintln!(
                "fold {fold} epoch {:>4}  train {:.6}  val {v:.6}",
                e.epoch, e.train_loss
            ),
            None => eprintln!(
                "fold {fold} epoch {:>4}  train {:.6}",
                e.epoch, e.train_loss
            ),
        },
    )
    .with_context(|| format!("training fold {fold}"))?;

    let log = dir.join(LOSS_LOG_FILE);
    std::fs::write(&log, outcome.log.to_tsv())
        .with_context(|| format!("writing {}", log.display()))?;
    outcome.best.save(dir.join(CHECKPOINT_FILE))?;
    eprintln!(
        "fold {fold}: {} steps, kept epoch {}",
        outcome.steps, outcome.best_epoch
    );

    let best = MlcNet32::from_params(config.clone(), outcome.best)?;
    let record = score(&best, fold, eval_set, args.threshold)?;
    eprintln!("fold {fold}: F1 {:.4}", record.f1);
    Ok(record)
}

pub fn run(args: &TrainArgs, cmd: &Command, started: u64) -> Result<()> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        bail!("--threshold must lie in (0, 1), got {}", args.threshold);
    }
    if args.folds == 0 {
        bail!("--folds must be at least 1");
    }
    let config = resolve_config(args.config.as_deref())?;
    let entries = read_manifest(&args.data)?;
    let samples = entries
        .iter()
        .map(|e| e.load())
        .collect::<mlcseg::Result<Vec<_>>>()?;

    create_dir(&args.out)?;
    std::fs::write(args.out.join(CONFIG_FILE), config.to_toml_string())
        .with_context(|| format!("writing {}", args.out.join(CONFIG_FILE).display()))?;

    let mut records = Vec::new();
    if args.folds == 1 {
        if args.fold_index.is_some_and(|f| f != 0) {
            bail!("--fold-index must be 0 when --folds is 1");
        }
        records.push(train_one(args, &config, 0, &samples, &[], &samples)?);
    } else {
        let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        let plan: FoldPlan = kfold_split(&ids, args.folds, seed::derive(args.seed, seed::SPLIT))?;
        plan.save(args.out.join(FOLDS_FILE))?;
        let folds: Vec<usize> = match args.fold_index {
            Some(f) if f >= args.folds => {
                bail!("--fold-index {f} out of range for {} folds", args.folds)
            }
            Some(f) => vec![f],
            None => (0..args.folds).collect(),
        };
        for fold in folds {
            let (train_set, heldout) = split_fold(&samples, &plan, fold)?;
            records.push(train_one(
                args, &config, fold, &train_set, &heldout, &heldout,
            )?);
        }
    }

    let report = EvalReport::new(args.threshold, records)?;
    write_json(&args.out.join(REPORT_FILE), &report)?;
    println!(
        "mean F1 {:.4} ± {:.4} over {} fold(s)",
        report.aggregate.mean_f1,
        report.aggregate.std_f1,
        report.folds.len()
    );
    RunManifest::new(
        cmd,
        &args.out,
        args.config.as_deref(),
        Some(args.seed),
        Some(&config),
        started,
    )
    .write()
}
