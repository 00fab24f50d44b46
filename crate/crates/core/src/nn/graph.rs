//! Layer graph generated from a [`ModelConfig`], plus parameter and
//! receptive-field accounting over it.

use serde::Serialize;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::ConvSpec;

/// One bottleneck residual unit, addressed by its name prefix (`g2.u1`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSpec {
    pub prefix: String,
    pub in_channels: usize,
    pub mid_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl UnitSpec {
    pub fn has_projection(&self) -> bool {
        self.stride != 1 || self.in_channels != self.out_channels
    }

    /// 1×1 reduce; carries the unit's stride.
    pub fn conv1(&self) -> ConvSpec {
        ConvSpec::new(self.in_channels, self.mid_channels, 1).stride(self.stride)
    }

    pub fn conv2(&self) -> ConvSpec {
        ConvSpec::new(self.mid_channels, self.mid_channels, 3)
            .dilation(self.dilation)
            .same_padding()
    }

    /// 1×1 expand.
    pub fn conv3(&self) -> ConvSpec {
        ConvSpec::new(self.mid_channels, self.out_channels, 1)
    }

    pub fn projection(&self) -> ConvSpec {
        ConvSpec::new(self.in_channels, self.out_channels, 1).stride(self.stride)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub prefix: String,
    pub units: Vec<UnitSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdcSpec {
    /// `pdc2` for the module fed by f2, and so on.
    pub prefix: String,
    pub in_channels: usize,
    pub branch_channels: usize,
    pub rates: Vec<usize>,
    pub entry_stride: usize,
}

impl PdcSpec {
    pub fn entry(&self) -> ConvSpec {
        ConvSpec::new(self.in_channels, self.branch_channels, 3)
            .stride(self.entry_stride)
            .padding(1)
    }

    pub fn branch(&self, rate: usize) -> ConvSpec {
        ConvSpec::new(self.branch_channels, self.branch_channels, 3)
            .dilation(rate)
            .same_padding()
    }

    pub fn out_channels(&self) -> usize {
        self.branch_channels * self.rates.len()
    }

    pub fn branch_name(&self, i: usize) -> String {
        format!("{}.branch{}", self.prefix, i + 1)
    }
}

impl ModelConfig {
    pub fn stem_spec(&self) -> ConvSpec {
        ConvSpec::new(
            self.input_channels,
            self.stem.out_channels,
            self.stem.kernel,
        )
        .stride(self.stem.stride)
        .same_padding()
    }

    pub fn group_specs(&self) -> Vec<GroupSpec> {
        let mut in_ch = self.stem.out_channels;
        self.groups
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                let units = (0..g.units)
                    .map(|ui| {
                        let spec = UnitSpec {
                            prefix: format!("g{}.u{}", gi + 1, ui + 1),
                            in_channels: if ui == 0 { in_ch } else { g.out_channels },
                            mid_channels: g.mid_channels,
                            out_channels: g.out_channels,
                            stride: if ui == 0 { g.stride } else { 1 },
                            dilation: g.internal_dilation,
                        };
                        spec
                    })
                    .collect();
                in_ch = g.out_channels;
                GroupSpec {
                    prefix: format!("g{}", gi + 1),
                    units,
                }
            })
            .collect()
    }

    /// PDC modules for f2 onwards.
    pub fn pdc_specs(&self) -> Vec<PdcSpec> {
        self.groups
            .iter()
            .enumerate()
            .skip(1)
            .map(|(gi, g)| PdcSpec {
                prefix: format!("pdc{}", gi + 1),
                in_channels: g.out_channels,
                branch_channels: self.pdc.branch_channels,
                rates: self.pdc.rates.clone(),
                entry_stride: self.pdc.entry_strides[gi - 1],
            })
            .collect()
    }

    pub fn head_spec(&self) -> ConvSpec {
        let fused = self.pdc_specs().iter().map(PdcSpec::out_channels).sum();
        ConvSpec::new(fused, self.head.out_channels, 1).bias(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv(ConvSpec),
    BatchNorm { channels: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDesc {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerDesc {
    fn conv(name: impl Into<String>, spec: ConvSpec) -> Self {
        LayerDesc {
            name: name.into(),
            kind: LayerKind::Conv(spec),
        }
    }

    fn bn(name: impl Into<String>, channels: usize) -> Self {
        LayerDesc {
            name: name.into(),
            kind: LayerKind::BatchNorm { channels },
        }
    }

    /// `(tensor name, shape, trainable)` for every tensor this layer owns.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, bool)> {
        match &self.kind {
            LayerKind::Conv(spec) => {
                let mut v = vec![(
                    format!("{}.weight", self.name),
                    spec.weight_shape().to_vec(),
                    true,
                )];
                if spec.has_bias {
                    v.push((format!("{}.bias", self.name), vec![spec.out_channels], true));
                }
                v
            }
            LayerKind::BatchNorm { channels } => vec![
                (format!("{}.gamma", self.name), vec![*channels], true),
                (format!("{}.beta", self.name), vec![*channels], true),
                (
                    format!("{}.running_mean", self.name),
                    vec![*channels],
                    false,
                ),
                (format!("{}.running_var", self.name), vec![*channels], false),
            ],
        }
    }

    pub fn trainable_count(&self) -> usize {
        match &self.kind {
            LayerKind::Conv(spec) => spec.param_count(),
            LayerKind::BatchNorm { channels } => 2 * channels,
        }
    }
}

/// Every layer of the network in execution order.
pub fn layers(config: &ModelConfig) -> Vec<LayerDesc> {
    let mut out = vec![LayerDesc::conv("stem", config.stem_spec())];
    for group in config.group_specs() {
        for u in &group.units {
            let p = &u.prefix;
            out.push(LayerDesc::bn(format!("{p}.bn1"), u.in_channels));
            out.push(LayerDesc::conv(format!("{p}.conv1"), u.conv1()));
            out.push(LayerDesc::bn(format!("{p}.bn2"), u.mid_channels));
            out.push(LayerDesc::conv(format!("{p}.conv2"), u.conv2()));
            out.push(LayerDesc::bn(format!("{p}.bn3"), u.mid_channels));
            out.push(LayerDesc::conv(format!("{p}.conv3"), u.conv3()));
            if u.has_projection() {
                out.push(LayerDesc::conv(format!("{p}.proj"), u.projection()));
            }
        }
    }
    for pdc in config.pdc_specs() {
        out.push(LayerDesc::conv(
            format!("{}.entry", pdc.prefix),
            pdc.entry(),
        ));
        out.push(LayerDesc::bn(
            format!("{}.entry_bn", pdc.prefix),
            pdc.branch_channels,
        ));
        for (i, &rate) in pdc.rates.iter().enumerate() {
            let name = pdc.branch_name(i);
            out.push(LayerDesc::conv(name.clone(), pdc.branch(rate)));
            out.push(LayerDesc::bn(format!("{name}_bn"), pdc.branch_channels));
        }
    }
    out.push(LayerDesc::conv("head", config.head_spec()));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerParams {
    pub name: String,
    pub kind: &'static str,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCount {
    pub per_layer: Vec<LayerParams>,
    pub total: usize,
    /// Weights only, 4 bytes each.
    pub model_size_bytes: usize,
}

impl ParamCount {
    /// Size in MiB of the 4-byte weights.
    pub fn model_size_mb(&self) -> f64 {
        self.model_size_bytes as f64 / (1u64 << 20) as f64
    }
}

/// Trainable parameters: convolution weights and biases plus normalization
/// scale and shift. Running statistics are not counted.
pub fn count_parameters(config: &ModelConfig) -> ParamCount {
    let per_layer: Vec<LayerParams> = layers(config)
        .iter()
        .map(|l| LayerParams {
            name: l.name.clone(),
            kind: match l.kind {
                LayerKind::Conv(_) => "conv",
                LayerKind::BatchNorm { .. } => "batchnorm",
            },
            count: l.trainable_count(),
        })
        .collect();
    let total = per_layer.iter().map(|l| l.count).sum();
    ParamCount {
        per_layer,
        total,
        model_size_bytes: total * 4,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReceptiveField {
    /// Theoretical receptive-field extent in input pixels.
    pub rf: usize,
    /// Product of strides from the input, i.e. output pixel spacing.
    pub jump: usize,
    pub resolution_fraction: f64,
}

impl ReceptiveField {
    const INPUT: ReceptiveField = ReceptiveField {
        rf: 1,
        jump: 1,
        resolution_fraction: 1.0,
    };

    /// `rf ← rf + (k−1)·d·jump`, `jump ← jump·s`.
    pub fn through(self, spec: &ConvSpec) -> ReceptiveField {
        let rf = self.rf + (spec.kernel.0 - 1) * spec.dilation.0 * self.jump;
        let jump = self.jump * spec.stride.0;
        ReceptiveField {
            rf,
            jump,
            resolution_fraction: 1.0 / jump as f64,
        }
    }
}

/// Receptive field at the output of every convolution (and of each
/// normalization, which inherits its input's), following the longest path
/// through residual branches.
pub fn receptive_fields(config: &ModelConfig) -> Vec<(String, ReceptiveField)> {
    let mut out = Vec::new();
    let mut cur = ReceptiveField::INPUT.through(&config.stem_spec());
    out.push(("stem".to_string(), cur));
    let mut features = Vec::new();
    for group in config.group_specs() {
        for u in &group.units {
            let input = cur;
            let p = &u.prefix;
            out.push((format!("{p}.bn1"), input));
            let a = input.through(&u.conv1());
            out.push((format!("{p}.conv1"), a));
            out.push((format!("{p}.bn2"), a));
            let b = a.through(&u.conv2());
            out.push((format!("{p}.conv2"), b));
            out.push((format!("{p}.bn3"), b));
            cur = b.through(&u.conv3());
            out.push((format!("{p}.conv3"), cur));
            if u.has_projection() {
                out.push((format!("{p}.proj"), input.through(&u.projection())));
            }
        }
        features.push(cur);
    }
    for (i, pdc) in config.pdc_specs().iter().enumerate() {
        let entry = features[i + 1].through(&pdc.entry());
        out.push((format!("{}.entry", pdc.prefix), entry));
        out.push((format!("{}.entry_bn", pdc.prefix), entry));
        for (bi, &rate) in pdc.rates.iter().enumerate() {
            let br = entry.through(&pdc.branch(rate));
            out.push((pdc.branch_name(bi), br));
            out.push((format!("{}_bn", pdc.branch_name(bi)), br));
        }
    }
    let deepest = out
        .iter()
        .filter(|(n, _)| n.starts_with("pdc"))
        .map(|(_, r)| *r)
        .max_by_key(|r| r.rf)
        .unwrap_or(cur);
    out.push(("head".to_string(), deepest.through(&config.head_spec())));
    out
}

pub fn receptive_field(config: &ModelConfig, layer: &str) -> Result<ReceptiveField> {
    receptive_fields(config)
        .into_iter()
        .find(|(n, _)| n == layer)
        .map(|(_, r)| r)
        .ok_or_else(|| Error::UnknownLayer(layer.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_count() {
        let spec = ConvSpec::new(5, 7, 3).bias(true);
        assert_eq!(spec.param_count(), 3 * 3 * 5 * 7 + 7);
    }

    #[test]
    fn recurrence_examples() {
        let r = ReceptiveField::INPUT.through(&ConvSpec::new(1, 1, 3));
        assert_eq!(r.rf, 3);
        let prefix = ReceptiveField {
            rf: 11,
            jump: 4,
            resolution_fraction: 0.25,
        };
        assert_eq!(prefix.through(&ConvSpec::new(1, 1, 3).dilation(2)).rf, 27);
    }

    #[test]
    fn pdc_rates_widen_receptive_fields() {
        let cfg = ModelConfig::default();
        for pdc in cfg.pdc_specs() {
            let base = receptive_field(&cfg, &pdc.branch_name(0)).unwrap();
            assert_eq!(pdc.rates[0], 1);
            for i in 1..pdc.rates.len() {
                let r = receptive_field(&cfg, &pdc.branch_name(i)).unwrap();
                assert!(r.rf > base.rf);
                assert_eq!(r.jump, 16);
            }
        }
        assert!(matches!(
            receptive_field(&cfg, "nope"),
            Err(Error::UnknownLayer(_))
        ));
    }

    #[test]
    fn default_layout() {
        let cfg = ModelConfig::default();
        let convs = layers(&cfg)
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Conv(_)))
            .filter(|l| l.name == "stem" || l.name.starts_with('g') && !l.name.ends_with("proj"))
            .count();
        assert_eq!(convs, 46);
        for pdc in cfg.pdc_specs() {
            let rf = receptive_field(&cfg, &format!("{}.entry", pdc.prefix)).unwrap();
            assert_eq!(rf.resolution_fraction, 1.0 / 16.0);
        }
    }
}
