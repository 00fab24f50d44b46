use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mlcseg::data::{
    crop_top_left, load_image, load_mask, pad_reflect, read_manifest, save_mask, save_rgb,
};
use mlcseg::metrics::render_overlay;
use mlcseg::nn::{ModelConfig, ModelParams, INPUT_MULTIPLE};
use mlcseg::{MlcNet32, Tensor32};
use serde::{Deserialize, Serialize};

use crate::manifest::{create_dir, resolve_config, RunManifest};
use crate::train::CONFIG_FILE;
use crate::Command;

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Model configuration; defaults to config.toml beside the checkpoint,
    /// then to the reference configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Manifest whose images are segmented; its masks feed `--overlay`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Reflect-pad inputs to a multiple of 32 and crop the prediction back.
    #[arg(long)]
    pub pad: bool,
    /// Also write true/false positive/negative overlays (needs `--data`).
    #[arg(long)]
    pub overlay: bool,
    /// Images to segment, in addition to those listed by `--data`.
    pub images: Vec<PathBuf>,
}

/// Probability map (1×H×W) for one 3×H×W image. Without `pad`, extents
/// must already be multiples of the input granularity.
pub fn predict_image(net: &MlcNet32, image: &Tensor32, pad: bool) -> Result<Tensor32> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let aligned = h % INPUT_MULTIPLE == 0 && w % INPUT_MULTIPLE == 0;
    if !aligned && !pad {
        bail!("{h}×{w} image is not a multiple of {INPUT_MULTIPLE} in both extents (use --pad)");
    }
    let input = if aligned {
        image.clone()
    } else {
        pad_reflect(image, INPUT_MULTIPLE)?
    };
    let shape = input.shape().to_vec();
    let prob = net.predict(&input.reshape([1, shape[0], shape[1], shape[2]])?)?;
    let prob = prob.reshape([1, shape[1], shape[2]])?;
    Ok(if aligned {
        prob
    } else {
        crop_top_left(&prob, h, w)?
    })
}

pub fn binarize(prob: &Tensor32, threshold: f64) -> Tensor32 {
    prob.map(|p| if p as f64 >= threshold { 1.0 } else { 0.0 })
}

fn resolve_infer_config(args: &InferArgs) -> Result<(ModelConfig, Option<PathBuf>)> {
    if let Some(p) = &args.config {
        return Ok((resolve_config(Some(p))?, Some(p.clone())));
    }
    let beside = args.checkpoint.with_file_name(CONFIG_FILE);
    if beside.is_file() {
        return Ok((resolve_config(Some(&beside))?, Some(beside)));
    }
    Ok((ModelConfig::default(), None))
}

struct Job {
    id: String,
    image: PathBuf,
    mask: Option<PathBuf>,
}

fn stem_id(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .with_context(|| format!("{}: cannot derive an id from the file name", path.display()))
}

pub fn run(args: &InferArgs, cmd: &Command, started: u64) -> Result<()> {
    if args.overlay && args.data.is_none() {
        bail!("--overlay needs ground-truth masks; pass them with --data <manifest>");
    }
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        bail!("--threshold must lie in (0, 1), got {}", args.threshold);
    }
    let (config, config_path) = resolve_infer_config(args)?;
    let params = ModelParams::<f32>::load(&args.checkpoint)?;
    let net = MlcNet32::from_params(config.clone(), params).with_context(|| {
        format!(
            "{} does not match the model configuration",
            args.checkpoint.display()
        )
    })?;

    let mut jobs = Vec::new();
    if let Some(data) = &args.data {
        for e in read_manifest(data)? {
            jobs.push(Job {
                id: e.id,
                image: e.image,
                mask: Some(e.mask),
            });
        }
    }
    for p in &args.images {
        jobs.push(Job {
            id: stem_id(p)?,
            image: p.clone(),
            mask: None,
        });
    }
    if jobs.is_empty() {
        bail!("no images given (pass image paths or --data <manifest>)");
    }
    let mut seen = HashSet::new();
    for j in &jobs {
        if !seen.insert(j.id.as_str()) {
            bail!("two inputs map to the output name `{}.png`", j.id);
        }
    }

    create_dir(&args.out)?;
    for job in &jobs {
        let image = load_image(&job.image)?;
        let t0 = Instant::now();
        let prob = predict_image(&net, &image, args.pad)
            .with_context(|| format!("{}", job.image.display()))?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        save_mask(
            args.out.join(format!("{}.png", job.id)),
            &binarize(&prob, args.threshold),
        )?;
        if args.overlay {
            let gt_path = job
                .mask
                .as_ref()
                .with_context(|| format!("no ground-truth mask for `{}`", job.id))?;
            let gt = load_mask(gt_path)?;
            let rgb = render_overlay(&prob, &gt, &image, args.threshold)
                .with_context(|| format!("overlay for `{}`", job.id))?;
            save_rgb(args.out.join(format!("{}_overlay.png", job.id)), rgb)?;
        }
        println!(
            "{}\t{}x{}\t{ms:.1} ms",
            job.id,
            image.shape()[2],
            image.shape()[1]
        );
    }
    RunManifest::new(
        cmd,
        &args.out,
        config_path.as_deref(),
        None,
        Some(&config),
        started,
    )
    .write()
}
