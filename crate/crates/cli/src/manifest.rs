use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use mlcseg::nn::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::Command;

pub const RUN_MANIFEST: &str = "run.json";

/// Record of one invocation: enough to repeat it with `mlcseg rerun`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub threads: usize,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Resolved model configuration, when the command uses one.
    pub config: Option<ModelConfig>,
    pub invocation: Command,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(
        invocation: &Command,
        output_dir: &Path,
        config_path: Option<&Path>,
        seed: Option<u64>,
        config: Option<&ModelConfig>,
        started_unix_ms: u64,
    ) -> Self {
        RunManifest {
            command: invocation.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: config_path.map(Path::to_path_buf),
            seed,
            output_dir: output_dir.to_path_buf(),
            threads: rayon::current_num_threads(),
            started_unix_ms,
            finished_unix_ms: now_ms(),
            config: config.cloned(),
            invocation: invocation.clone(),
        }
    }

    /// Written last, so its presence marks a completed run.
    pub fn write(&self) -> Result<()> {
        let path = self.output_dir.join(RUN_MANIFEST);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("{}: not a run manifest", path.display()))
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Model configuration from `path`, or the reference configuration.
pub fn resolve_config(path: Option<&Path>) -> Result<ModelConfig> {
    match path {
        Some(p) => Ok(ModelConfig::load(p)?),
        None => Ok(ModelConfig::default()),
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
