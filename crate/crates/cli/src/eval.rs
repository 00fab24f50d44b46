use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use mlcseg::data::{load_gray, load_mask, read_manifest, FoldPlan};
use mlcseg::metrics::{evaluate_image, EvalReport, FoldRecord};
use serde::{Deserialize, Serialize};

use crate::manifest::{create_dir, write_json, RunManifest};
use crate::train::REPORT_FILE;
use crate::Command;

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Ground-truth manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory holding `<id>.png` predictions (grayscale; read as probabilities).
    #[arg(long)]
    pub pred: PathBuf,
    /// `id<TAB>fold` plan grouping images into folds; one fold otherwise.
    #[arg(long)]
    pub folds: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvalArgs, cmd: &Command, started: u64) -> Result<()> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        bail!("--threshold must lie in (0, 1), got {}", args.threshold);
    }
    let plan = match &args.folds {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(FoldPlan::from_tsv(&text, 0).with_context(|| format!("{}", p.display()))?)
        }
        None => None,
    };
    let mut by_fold: BTreeMap<usize, Vec<_>> = BTreeMap::new();
    for e in read_manifest(&args.data)? {
        let fold = match &plan {
            Some(p) => p
                .fold_of(&e.id)
                .with_context(|| format!("`{}` is missing from the fold plan", e.id))?,
            None => 0,
        };
        let pred_path = args.pred.join(format!("{}.png", e.id));
        let pred = load_gray(&pred_path)?;
        let gt = load_mask(&e.mask)?;
        let record = evaluate_image(&e.id, &pred, &gt, args.threshold).with_context(|| {
            format!(
                "scoring {} against {}",
                pred_path.display(),
                e.mask.display()
            )
        })?;
        by_fold.entry(fold).or_default().push(record);
    }
    let folds = by_fold
        .into_iter()
        .map(|(f, images)| FoldRecord::new(f, images))
        .collect::<mlcseg::Result<Vec<_>>>()?;
    let report = EvalReport::new(args.threshold, folds)?;

    create_dir(&args.out)?;
    write_json(&args.out.join(REPORT_FILE), &report)?;
    for f in &report.folds {
        println!("fold {}\t{} images\tF1 {:.4}", f.fold, f.images.len(), f.f1);
    }
    println!(
        "mean F1 {:.4} ± {:.4}",
        report.aggregate.mean_f1, report.aggregate.std_f1
    );
    RunManifest::new(cmd, &args.out, None, None, None, started).write()
}
