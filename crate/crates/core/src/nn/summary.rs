use serde::Serialize;

use super::config::ModelConfig;
use super::graph::{count_parameters, receptive_fields};

/// Bytes per parameter when weights are stored with Adam's two moment
/// estimates alongside them.
pub const BYTES_PER_PARAM_WITH_ADAM: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRow {
    pub name: String,
    pub kind: &'static str,
    pub params: usize,
    /// Output pixel spacing in input pixels.
    pub stride: usize,
    pub resolution_fraction: f64,
    pub receptive_field: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub name: String,
    pub channels: usize,
    pub stride: usize,
    pub resolution_fraction: f64,
    pub receptive_field: usize,
}

/// Per-layer and per-stage structural report of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub layers: Vec<LayerRow>,
    /// Feature maps f1..fG followed by the PDC outputs.
    pub stages: Vec<StageRow>,
    pub total_params: usize,
    pub encoder_conv_layers: usize,
    /// 4-byte weights, in MiB.
    pub model_size_mb: f64,
    /// Weights plus Adam moments, in MiB.
    pub model_size_with_adam_mb: f64,
}

impl ModelSummary {
    pub fn new(config: &ModelConfig) -> Self {
        let counts = count_parameters(config);
        let rfs = receptive_fields(config);
        let rf_of = |name: &str| {
            rfs.iter()
                .find(|(n, _)| n == name)
                .map(|(_, r)| *r)
                .expect("layer has a receptive field")
        };
        let layers = counts
            .per_layer
            .iter()
            .map(|l| {
                let rf = rf_of(&l.name);
                LayerRow {
                    name: l.name.clone(),
                    kind: l.kind,
                    params: l.count,
                    stride: rf.jump,
                    resolution_fraction: rf.resolution_fraction,
                    receptive_field: rf.rf,
                }
            })
            .collect();

        let mut stages = Vec::new();
        for group in config.group_specs() {
            let last = group.units.last().expect("groups have units");
            let rf = rf_of(&format!("{}.conv3", last.prefix));
            stages.push(StageRow {
                name: format!("f{}", stages.len() + 1),
                channels: last.out_channels,
                stride: rf.jump,
                resolution_fraction: rf.resolution_fraction,
                receptive_field: rf.rf,
            });
        }
        for pdc in config.pdc_specs() {
            // widest branch bounds the module's receptive field
            let rf = (0..pdc.rates.len())
                .map(|i| rf_of(&pdc.branch_name(i)))
                .max_by_key(|r| r.rf)
                .expect("rates");
            stages.push(StageRow {
                name: pdc.prefix.clone(),
                channels: pdc.out_channels(),
                stride: rf.jump,
                resolution_fraction: rf.resolution_fraction,
                receptive_field: rf.rf,
            });
        }
        let mib = (1u64 << 20) as f64;
        ModelSummary {
            layers,
            stages,
            total_params: counts.total,
            encoder_conv_layers: config.encoder_conv_layers(),
            model_size_mb: counts.model_size_mb(),
            model_size_with_adam_mb: (counts.total * BYTES_PER_PARAM_WITH_ADAM) as f64 / mib,
        }
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<22} {:<9} {:>10} {:>7} {:>10} {:>6}\n",
            "layer", "kind", "params", "stride", "resolution", "rf"
        ));
        for l in &self.layers {
            s.push_str(&format!(
                "{:<22} {:<9} {:>10} {:>7} {:>10} {:>6}\n",
                l.name,
                l.kind,
                l.params,
                l.stride,
                format!("1/{}", l.stride),
                l.receptive_field
            ));
        }
        s.push_str("\nstage        channels  resolution      rf\n");
        for st in &self.stages {
            s.push_str(&format!(
                "{:<12} {:>8}  {:>10} {:>7}\n",
                st.name,
                st.channels,
                format!("1/{}", st.stride),
                st.receptive_field
            ));
        }
        s.push_str(&format!("\ntotal parameters      {}\n", self.total_params));
        s.push_str(&format!(
            "encoder conv layers   {}\n",
            self.encoder_conv_layers
        ));
        s.push_str(&format!(
            "model size            {:.2} MB (4-byte weights)\n",
            self.model_size_mb
        ));
        s.push_str(&format!(
            "with Adam state       {:.2} MB\n",
            self.model_size_with_adam_mb
        ));
        s
    }
}
