use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution of every context map relative to the network input.
pub const OUTPUT_STRIDE: usize = 16;

/// Spatial extents fed to the network must be multiples of this.
pub const INPUT_MULTIPLE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub stem: StemConfig,
    pub groups: Vec<GroupConfig>,
    pub pdc: PdcConfig,
    pub head: HeadConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StemConfig {
    pub kernel: usize,
    pub stride: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub units: usize,
    pub mid_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub internal_dilation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdcConfig {
    pub branch_channels: usize,
    pub rates: Vec<usize>,
    /// One entry stride per PDC input, aligned to f2, f3, ...
    pub entry_strides: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub dropout_rate: f64,
    pub out_channels: usize,
}

impl Default for ModelConfig {
    /// 7×7 stem, five bottleneck groups of three units (46 encoder convolutions),
    /// PDC rates {1, 2, 4, 8} at 1/16 resolution.
    fn default() -> Self {
        let outs = [64, 128, 256, 512, 512];
        let mids = [16, 32, 64, 128, 128];
        let strides = [1, 2, 2, 2, 1];
        let dilations = [1, 1, 1, 1, 2];
        ModelConfig {
            input_channels: 3,
            stem: StemConfig {
                kernel: 7,
                stride: 2,
                out_channels: 32,
            },
            groups: (0..5)
                .map(|i| GroupConfig {
                    units: 3,
                    mid_channels: mids[i],
                    out_channels: outs[i],
                    stride: strides[i],
                    internal_dilation: dilations[i],
                })
                .collect(),
            pdc: PdcConfig {
                branch_channels: 64,
                rates: vec![1, 2, 4, 8],
                entry_strides: vec![4, 2, 1, 1],
            },
            head: HeadConfig {
                dropout_rate: 0.5,
                out_channels: 1,
            },
        }
    }
}

impl ModelConfig {
    /// Two-group network with a handful of channels, for gradient checks and
    /// fast experiments. Passes [`check_graph`](Self::check_graph) but not
    /// [`validate`](Self::validate).
    pub fn miniature() -> Self {
        ModelConfig {
            input_channels: 3,
            stem: StemConfig {
                kernel: 3,
                stride: 2,
                out_channels: 3,
            },
            groups: vec![
                GroupConfig {
                    units: 1,
                    mid_channels: 2,
                    out_channels: 4,
                    stride: 2,
                    internal_dilation: 1,
                },
                GroupConfig {
                    units: 1,
                    mid_channels: 2,
                    out_channels: 4,
                    stride: 2,
                    internal_dilation: 1,
                },
            ],
            pdc: PdcConfig {
                branch_channels: 2,
                rates: vec![1, 2],
                entry_strides: vec![2],
            },
            head: HeadConfig {
                dropout_rate: 0.5,
                out_channels: 1,
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Downsampling factor of the feature map produced by each group.
    pub fn feature_strides(&self) -> Vec<usize> {
        self.groups
            .iter()
            .scan(self.stem.stride, |acc, g| {
                *acc *= g.stride;
                Some(*acc)
            })
            .collect()
    }

    /// Stem plus three convolutions per unit; shortcut projections excluded.
    pub fn encoder_conv_layers(&self) -> usize {
        1 + self.groups.iter().map(|g| 3 * g.units).sum::<usize>()
    }

    /// Internal consistency of the layer graph, independent of the
    /// five-group/four-rate shape of the reference architecture.
    pub fn check_graph(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_channels == 0 {
            return fail("input_channels must be positive".into());
        }
        if self.stem.kernel == 0 || self.stem.kernel.is_multiple_of(2) {
            return fail(format!("stem.kernel must be odd, got {}", self.stem.kernel));
        }
        if self.stem.stride == 0 || self.stem.out_channels == 0 {
            return fail("stem.stride and stem.out_channels must be positive".into());
        }
        if self.groups.len() < 2 {
            return fail("at least two residual groups are required".into());
        }
        for (i, g) in self.groups.iter().enumerate() {
            if g.units == 0
                || g.mid_channels == 0
                || g.out_channels == 0
                || g.stride == 0
                || g.internal_dilation == 0
            {
                return fail(format!("groups[{i}]: every field must be positive"));
            }
        }
        if self.pdc.branch_channels == 0 || self.pdc.rates.is_empty() || self.pdc.rates.contains(&0)
        {
            return fail("pdc.branch_channels and pdc.rates must be positive and non-empty".into());
        }
        if self.pdc.entry_strides.len() != self.groups.len() - 1 {
            return fail(format!(
                "pdc.entry_strides needs {} entries (one per feature map after f1), got {}",
                self.groups.len() - 1,
                self.pdc.entry_strides.len()
            ));
        }
        let strides = self.feature_strides();
        for (i, &s) in self.pdc.entry_strides.iter().enumerate() {
            if s == 0 || s * strides[i + 1] != OUTPUT_STRIDE {
                return fail(format!(
                    "pdc.entry_strides[{i}] = {s} puts f{} (stride {}) at 1/{} instead of 1/{OUTPUT_STRIDE}",
                    i + 2,
                    strides[i + 1],
                    s * strides[i + 1]
                ));
            }
        }
        if !(0.0..1.0).contains(&self.head.dropout_rate) {
            return fail(format!(
                "head.dropout_rate {} outside [0, 1)",
                self.head.dropout_rate
            ));
        }
        if self.head.out_channels != 1 {
            return fail("head.out_channels must be 1 (binary segmentation)".into());
        }
        Ok(())
    }

    /// Full check: graph consistency plus the reference shape (RGB input,
    /// five groups, four PDC rates).
    pub fn validate(&self) -> Result<()> {
        self.check_graph()?;
        if self.input_channels != 3 {
            return Err(Error::Config("input_channels must be 3".into()));
        }
        if self.groups.len() != 5 {
            return Err(Error::Config(format!(
                "exactly 5 groups required, got {}",
                self.groups.len()
            )));
        }
        if self.pdc.rates.len() != 4 {
            return Err(Error::Config(format!(
                "exactly 4 PDC rates required, got {}",
                self.pdc.rates.len()
            )));
        }
        Ok(())
    }
}
