use std::path::PathBuf;

use anyhow::Result;
use mlcseg::nn::ModelSummary;
use serde::{Deserialize, Serialize};

use crate::manifest::{create_dir, resolve_config, write_json, RunManifest};
use crate::Command;

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct DescribeArgs {
    /// Model configuration (TOML); the reference configuration if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write summary.json and a run manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &DescribeArgs, cmd: &Command, started: u64) -> Result<()> {
    let config = resolve_config(args.config.as_deref())?;
    let summary = ModelSummary::new(&config);
    print!("{}", summary.render_text());
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&out.join("summary.json"), &summary)?;
        RunManifest::new(
            cmd,
            out,
            args.config.as_deref(),
            None,
            Some(&config),
            started,
        )
        .write()?;
    }
    Ok(())
}
