//! Finite-difference gradient cases shared by the core gradient tests and
//! the acceptance suite. Every case reduces its output to a scalar through
//! random weights so that gradients are O(1) and relative errors meaningful.

use mlcseg::autodiff::{check_gradients, GradCheck, Tape, Var};
use mlcseg::nn::{
    is_trainable, pdc_module, residual_unit, ForwardCtx, MlcNet, Mode, ModelConfig, ModelParams,
    PdcSpec, UnitSpec,
};
use mlcseg::tensor::{BnMode, RunningStats};
use mlcseg::{ConvSpec, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-6;
/// Whole-network losses carry more forward roundoff; a wider step keeps the
/// central difference above that noise while truncation stays negligible.
pub const EPS_NETWORK: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-5;

pub struct GradCase {
    pub name: &'static str,
    pub run: fn(u64) -> Result<GradCheck>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Values bounded away from zero, so ReLU kinks are never crossed by a probe.
fn away_from_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = r.random_range(0.1..1.0);
        if r.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn weighted(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let w = uniform(&shape, -1.0, 1.0, &mut rng(seed ^ 0x5eed));
    tape.weighted_sum(y, w)
}

fn conv_case(seed: u64, spec: ConvSpec, hw: usize) -> Result<GradCheck> {
    let mut r = rng(seed);
    let x = uniform(&[2, spec.in_channels, hw, hw], -1.0, 1.0, &mut r);
    let w = uniform(&spec.weight_shape(), -1.0, 1.0, &mut r);
    let mut inputs = vec![("x", x), ("w", w)];
    if spec.has_bias {
        inputs.push(("b", uniform(&[spec.out_channels], -1.0, 1.0, &mut r)));
    }
    check_gradients(
        &inputs,
        |t, v| {
            let y = t.conv2d(v[0], v[1], v.get(2).copied(), &spec)?;
            weighted(t, y, seed)
        },
        EPS,
        None,
    )
}

fn unary_case(
    seed: u64,
    x: Tensor<f64>,
    op: fn(&mut Tape<f64>, Var) -> Result<Var>,
) -> Result<GradCheck> {
    check_gradients(
        &[("x", x)],
        |t, v| {
            let y = op(t, v[0])?;
            weighted(t, y, seed)
        },
        EPS,
        None,
    )
}

fn bn_case(seed: u64, mode: BnMode) -> Result<GradCheck> {
    let mut r = rng(seed);
    let x = uniform(&[3, 2, 3, 3], -2.0, 2.0, &mut r);
    let gamma = uniform(&[2], 0.5, 1.5, &mut r);
    let beta = uniform(&[2], -1.0, 1.0, &mut r);
    let mean = uniform(&[2], -0.5, 0.5, &mut r);
    let var = uniform(&[2], 0.5, 2.0, &mut r);
    check_gradients(
        &[("x", x), ("gamma", gamma), ("beta", beta)],
        |t, v| {
            let (y, _) = t.batchnorm(
                v[0],
                v[1],
                v[2],
                RunningStats {
                    mean: &mean,
                    var: &var,
                },
                mode,
            )?;
            weighted(t, y, seed)
        },
        EPS,
        None,
    )
}

fn random_params(names: &[(String, Vec<usize>)], r: &mut ChaCha8Rng) -> ModelParams<f64> {
    let mut p = ModelParams::default();
    for (name, shape) in names {
        let t = if name.ends_with(".gamma") || name.ends_with(".running_var") {
            uniform(shape, 0.5, 1.5, r)
        } else {
            uniform(shape, -0.5, 0.5, r)
        };
        p.insert(name.clone(), t);
    }
    p
}

fn trainable_inputs(p: &ModelParams<f64>) -> Vec<(String, Tensor<f64>)> {
    p.trainable()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect()
}

fn unit_names(u: &UnitSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let p = &u.prefix;
    let mut convs = vec![
        ("conv1", u.conv1()),
        ("conv2", u.conv2()),
        ("conv3", u.conv3()),
    ];
    if u.has_projection() {
        convs.push(("proj", u.projection()));
    }
    for (n, s) in convs {
        out.push((format!("{p}.{n}.weight"), s.weight_shape().to_vec()));
    }
    for (bn, c) in [
        ("bn1", u.in_channels),
        ("bn2", u.mid_channels),
        ("bn3", u.mid_channels),
    ] {
        for t in ["gamma", "beta", "running_mean", "running_var"] {
            out.push((format!("{p}.{bn}.{t}"), vec![c]));
        }
    }
    out
}

fn unit_case(seed: u64, u: UnitSpec, mode: Mode) -> Result<GradCheck> {
    let mut r = rng(seed);
    let params = random_params(&unit_names(&u), &mut r);
    let x = uniform(&[2, u.in_channels, 6, 6], -1.0, 1.0, &mut r);
    let mut inputs = vec![("x".to_string(), x)];
    inputs.extend(trainable_inputs(&params));
    let named: Vec<(&str, Tensor<f64>)> = inputs
        .iter()
        .map(|(n, t)| (n.as_str(), t.clone()))
        .collect();
    check_gradients(
        &named,
        |t, v| {
            let mut ctx = ForwardCtx::new(t, &params, mode, 0);
            let y = residual_unit(&mut ctx, v[0], &u)?;
            weighted(t, y, seed)
        },
        EPS,
        Some(24),
    )
}

fn pdc_case(seed: u64) -> Result<GradCheck> {
    let pdc = PdcSpec {
        prefix: "pdc2".into(),
        in_channels: 3,
        branch_channels: 2,
        rates: vec![1, 2, 4],
        entry_stride: 2,
    };
    let mut names = vec![(
        "pdc2.entry.weight".to_string(),
        pdc.entry().weight_shape().to_vec(),
    )];
    let mut bns = vec!["pdc2.entry_bn".to_string()];
    for (i, &rate) in pdc.rates.iter().enumerate() {
        names.push((
            format!("{}.weight", pdc.branch_name(i)),
            pdc.branch(rate).weight_shape().to_vec(),
        ));
        bns.push(format!("{}_bn", pdc.branch_name(i)));
    }
    for bn in bns {
        for t in ["gamma", "beta", "running_mean", "running_var"] {
            names.push((format!("{bn}.{t}"), vec![2]));
        }
    }
    let mut r = rng(seed);
    let params = random_params(&names, &mut r);
    let x = uniform(&[2, 3, 8, 8], -1.0, 1.0, &mut r);
    let mut inputs = vec![("x".to_string(), x)];
    inputs.extend(trainable_inputs(&params));
    let named: Vec<(&str, Tensor<f64>)> = inputs
        .iter()
        .map(|(n, t)| (n.as_str(), t.clone()))
        .collect();
    check_gradients(
        &named,
        |t, v| {
            let mut ctx = ForwardCtx::new(t, &params, Mode::Train, 0);
            let y = pdc_module(&mut ctx, v[0], &pdc)?;
            weighted(t, y, seed)
        },
        EPS,
        Some(24),
    )
}

/// Whole two-group network, BCE loss against a random mask.
fn miniature_case(seed: u64, mode: Mode) -> Result<GradCheck> {
    let cfg = ModelConfig::miniature();
    let mut r = rng(seed);
    let init = ModelParams::<f64>::init(&cfg, seed)?;
    let names: Vec<(String, Vec<usize>)> = init
        .iter()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
        .collect();
    let mut params = random_params(&names, &mut r);
    for (n, t) in init.iter().filter(|(n, _)| n.ends_with(".weight")) {
        params.insert(n, t.clone());
    }
    let net = MlcNet::from_params(cfg, params.clone())?;
    let x = uniform(&[2, 3, 32, 32], 0.0, 1.0, &mut r);
    let target = Tensor::from_fn(&[2, 1, 32, 32], |_| r.random_bool(0.4) as u8 as f64);
    let mut inputs = vec![("image".to_string(), x)];
    inputs.extend(
        params
            .iter()
            .filter(|(n, _)| is_trainable(n))
            .map(|(n, t)| (n.to_string(), t.clone())),
    );
    let named: Vec<(&str, Tensor<f64>)> = inputs
        .iter()
        .map(|(n, t)| (n.as_str(), t.clone()))
        .collect();
    check_gradients(
        &named,
        |t, v| {
            let (out, _) = net.forward(t, v[0], mode, seed)?;
            t.bce(out.prob, target.clone())
        },
        EPS_NETWORK,
        Some(12),
    )
}

fn unit(
    prefix: &str,
    cin: usize,
    mid: usize,
    cout: usize,
    stride: usize,
    dilation: usize,
) -> UnitSpec {
    UnitSpec {
        prefix: prefix.into(),
        in_channels: cin,
        mid_channels: mid,
        out_channels: cout,
        stride,
        dilation,
    }
}

pub fn cases() -> Vec<GradCase> {
    vec![
        GradCase {
            name: "conv2d 3x3 pad 1 + bias",
            run: |s| conv_case(s, ConvSpec::new(2, 3, 3).padding(1).bias(true), 5),
        },
        GradCase {
            name: "conv2d 3x3 stride 2",
            run: |s| conv_case(s, ConvSpec::new(2, 2, 3).stride(2).padding(1), 7),
        },
        GradCase {
            name: "conv2d 3x3 dilation 2",
            run: |s| conv_case(s, ConvSpec::new(2, 2, 3).padding(2).dilation(2), 6),
        },
        GradCase {
            name: "conv2d 1x1",
            run: |s| conv_case(s, ConvSpec::new(3, 2, 1), 4),
        },
        GradCase {
            name: "conv2d 1x1 stride 2",
            run: |s| conv_case(s, ConvSpec::new(3, 2, 1).stride(2), 5),
        },
        GradCase {
            name: "conv2d 7x7 stride 2 pad 3",
            run: |s| conv_case(s, ConvSpec::new(1, 2, 7).stride(2).padding(3), 8),
        },
        GradCase {
            name: "bilinear upsample x2",
            run: |s| {
                unary_case(s, uniform(&[1, 2, 3, 3], -1.0, 1.0, &mut rng(s)), |t, x| {
                    t.upsample(x, 2)
                })
            },
        },
        GradCase {
            name: "bilinear upsample x16",
            run: |s| {
                unary_case(s, uniform(&[1, 1, 2, 3], -1.0, 1.0, &mut rng(s)), |t, x| {
                    t.upsample(x, 16)
                })
            },
        },
        GradCase {
            name: "concat",
            run: |s| {
                let mut r = rng(s);
                let a = uniform(&[2, 1, 2, 2], -1.0, 1.0, &mut r);
                let b = uniform(&[2, 3, 2, 2], -1.0, 1.0, &mut r);
                check_gradients(
                    &[("a", a), ("b", b)],
                    |t, v| {
                        let y = t.concat(&[v[0], v[1], v[0]])?;
                        weighted(t, y, s)
                    },
                    EPS,
                    None,
                )
            },
        },
        GradCase {
            name: "relu",
            run: |s| {
                unary_case(s, away_from_zero(&[2, 2, 3, 3], &mut rng(s)), |t, x| {
                    t.relu(x)
                })
            },
        },
        GradCase {
            name: "sigmoid",
            run: |s| {
                unary_case(s, uniform(&[2, 2, 3, 3], -4.0, 4.0, &mut rng(s)), |t, x| {
                    t.sigmoid(x)
                })
            },
        },
        GradCase {
            name: "add",
            run: |s| {
                let mut r = rng(s);
                let a = uniform(&[2, 2, 2, 2], -1.0, 1.0, &mut r);
                let b = uniform(&[2, 2, 2, 2], -1.0, 1.0, &mut r);
                check_gradients(
                    &[("a", a), ("b", b)],
                    |t, v| {
                        let y = t.add(v[0], v[1])?;
                        let y = t.add(y, v[0])?;
                        weighted(t, y, s)
                    },
                    EPS,
                    None,
                )
            },
        },
        GradCase {
            name: "scale",
            run: |s| {
                unary_case(s, uniform(&[2, 3], -1.0, 1.0, &mut rng(s)), |t, x| {
                    t.scale(x, -1.7)
                })
            },
        },
        GradCase {
            name: "dropout (training)",
            run: |s| {
                unary_case(s, uniform(&[2, 4, 3, 3], -1.0, 1.0, &mut rng(s)), |t, x| {
                    t.dropout(x, 0.5, 11, true)
                })
            },
        },
        GradCase {
            name: "batchnorm (training)",
            run: |s| bn_case(s, BnMode::Training),
        },
        GradCase {
            name: "batchnorm (inference)",
            run: |s| bn_case(s, BnMode::Inference),
        },
        GradCase {
            name: "sum",
            run: |s| {
                check_gradients(
                    &[("x", uniform(&[2, 3], -1.0, 1.0, &mut rng(s)))],
                    |t, v| t.sum(v[0]),
                    EPS,
                    None,
                )
            },
        },
        GradCase {
            name: "bce",
            run: |s| {
                let mut r = rng(s);
                let p = uniform(&[1, 1, 4, 4], 0.05, 0.95, &mut r);
                let target = Tensor::from_fn(&[1, 1, 4, 4], |_| r.random_bool(0.5) as u8 as f64);
                check_gradients(&[("p", p)], |t, v| t.bce(v[0], target.clone()), EPS, None)
            },
        },
        GradCase {
            name: "residual unit (identity shortcut)",
            run: |s| unit_case(s, unit("g1.u2", 4, 2, 4, 1, 1), Mode::Train),
        },
        GradCase {
            name: "residual unit (projection, stride 2)",
            run: |s| unit_case(s, unit("g2.u1", 3, 2, 4, 2, 1), Mode::Train),
        },
        GradCase {
            name: "residual unit (dilated, inference)",
            run: |s| unit_case(s, unit("g5.u1", 4, 2, 4, 1, 2), Mode::Eval),
        },
        GradCase {
            name: "PDC module",
            run: pdc_case,
        },
        GradCase {
            name: "miniature network (training)",
            run: |s| miniature_case(s, Mode::Train),
        },
        GradCase {
            name: "miniature network (inference)",
            run: |s| miniature_case(s, Mode::Eval),
        },
    ]
}
