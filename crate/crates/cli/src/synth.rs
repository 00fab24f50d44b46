use std::path::PathBuf;

use anyhow::Result;
use mlcseg::data::{
    save_image, save_mask, synth_dataset, write_manifest, ManifestEntry, SynthStyle,
};
use serde::{Deserialize, Serialize};

use crate::manifest::{create_dir, RunManifest};
use crate::Command;

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Square image side; a multiple of 32.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `rings` (tubule-like annuli) or `blobs` (ellipses).
    #[arg(long, default_value = "rings")]
    pub style: SynthStyle,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SynthArgs, cmd: &Command, started: u64) -> Result<()> {
    let samples = synth_dataset(args.n, args.size, args.seed, args.style)?;
    let (img_dir, mask_dir) = (args.out.join("images"), args.out.join("masks"));
    create_dir(&img_dir)?;
    create_dir(&mask_dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in &samples {
        let image = img_dir.join(format!("{}.png", s.id));
        let mask = mask_dir.join(format!("{}.png", s.id));
        save_image(&image, &s.image)?;
        save_mask(&mask, &s.mask)?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            image,
            mask,
        });
    }
    let manifest = args.out.join(MANIFEST_FILE);
    write_manifest(&manifest, &entries)?;
    eprintln!("wrote {} samples to {}", samples.len(), manifest.display());
    RunManifest::new(cmd, &args.out, None, Some(args.seed), None, started).write()
}
