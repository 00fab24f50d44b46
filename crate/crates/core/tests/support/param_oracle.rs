//! Parameter counts enumerated straight from a configuration, shared with
//! the acceptance suite.

use mlcseg::nn::{GroupConfig, ModelConfig};

/// Parameter count written directly from the configuration, without the
/// layer graph: convolutions are bias-free except the classifier, every
/// normalization has a scale and a shift.
pub fn enumerate(cfg: &ModelConfig) -> usize {
    let mut total = cfg.stem.kernel * cfg.stem.kernel * cfg.input_channels * cfg.stem.out_channels;
    let mut cin = cfg.stem.out_channels;
    let mut feature_channels = Vec::new();
    for g in &cfg.groups {
        for u in 0..g.units {
            let stride = if u == 0 { g.stride } else { 1 };
            let (m, cout) = (g.mid_channels, g.out_channels);
            total += 2 * cin + cin * m; // bn1, 1×1 reduce
            total += 2 * m + 9 * m * m; // bn2, 3×3
            total += 2 * m + m * cout; // bn3, 1×1 expand
            if stride != 1 || cin != cout {
                total += cin * cout;
            }
            cin = cout;
        }
        feature_channels.push(cin);
    }
    let b = cfg.pdc.branch_channels;
    let r = cfg.pdc.rates.len();
    for &c in &feature_channels[1..] {
        total += 9 * c * b + 2 * b;
        total += r * (9 * b * b + 2 * b);
    }
    total + (feature_channels.len() - 1) * r * b + 1
}

/// Differs from the reference in stem width, group 1 shape, group 5 depth
/// and PDC branch width/rates.
pub fn variant() -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.stem.out_channels = 24;
    cfg.groups[0] = GroupConfig {
        units: 2,
        mid_channels: 8,
        out_channels: 24,
        stride: 1,
        internal_dilation: 1,
    };
    cfg.groups[4].units = 1;
    cfg.pdc.branch_channels = 16;
    cfg.pdc.rates = vec![1, 3, 6, 12];
    cfg
}
