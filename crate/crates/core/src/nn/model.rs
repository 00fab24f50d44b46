//! Forward graph of the network: pre-activation bottleneck units, PDC
//! context modules on f2..f5, channel fusion, and the 1×1 + 16× bilinear head.

use super::config::{ModelConfig, INPUT_MULTIPLE, OUTPUT_STRIDE};
use super::graph::{GroupSpec, PdcSpec, UnitSpec};
use super::params::{BnUpdate, ModelParams, BN_MOMENTUM};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{BnMode, ConvSpec, RunningStats, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, active dropout, running-statistics updates collected.
    Train,
    /// Running statistics, dropout disabled.
    Eval,
}

impl Mode {
    fn bn(self) -> BnMode {
        match self {
            Mode::Train => BnMode::Training,
            Mode::Eval => BnMode::Inference,
        }
    }
}

/// Binds model parameters onto a tape while a forward pass is recorded.
pub struct ForwardCtx<'a, T> {
    pub tape: &'a mut Tape<T>,
    params: &'a ModelParams<T>,
    mode: Mode,
    dropout_seed: u64,
    bn_updates: Vec<BnUpdate<T>>,
}

impl<'a, T: Scalar> ForwardCtx<'a, T> {
    pub fn new(
        tape: &'a mut Tape<T>,
        params: &'a ModelParams<T>,
        mode: Mode,
        dropout_seed: u64,
    ) -> Self {
        ForwardCtx {
            tape,
            params,
            mode,
            dropout_seed,
            bn_updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Batch statistics seen by each normalization layer (training mode).
    pub fn into_bn_updates(self) -> Vec<BnUpdate<T>> {
        self.bn_updates
    }

    fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.tape.param_var(name) {
            return Ok(v);
        }
        let t = self.params.get(name)?.clone();
        self.tape.param(name, t)
    }

    fn conv(&mut self, x: Var, layer: &str, spec: &ConvSpec) -> Result<Var> {
        let w = self.param(&format!("{layer}.weight"))?;
        let b = if spec.has_bias {
            Some(self.param(&format!("{layer}.bias"))?)
        } else {
            None
        };
        self.tape.conv2d(x, w, b, spec)
    }

    fn bn(&mut self, x: Var, layer: &str) -> Result<Var> {
        let gamma = self.param(&format!("{layer}.gamma"))?;
        let beta = self.param(&format!("{layer}.beta"))?;
        let running = RunningStats {
            mean: self.params.get(&format!("{layer}.running_mean"))?,
            var: self.params.get(&format!("{layer}.running_var"))?,
        };
        let (y, stats) = self
            .tape
            .batchnorm(x, gamma, beta, running, self.mode.bn())?;
        if self.mode == Mode::Train {
            self.bn_updates.push(BnUpdate {
                layer: layer.to_string(),
                stats,
            });
        }
        Ok(y)
    }

    fn bn_relu(&mut self, x: Var, layer: &str) -> Result<Var> {
        let y = self.bn(x, layer)?;
        self.tape.relu(y)
    }
}

fn channels<T: Scalar>(ctx: &ForwardCtx<'_, T>, x: Var) -> Result<usize> {
    Ok(ctx.tape.value(x).dims4()?[1])
}

/// `y = F(x) + shortcut(x)` with the pre-activation bottleneck
/// `F = conv1x1 ∘ (bn, relu) ∘ conv3x3 ∘ (bn, relu) ∘ conv1x1 ∘ (bn, relu)`.
/// The first 1×1 convolution carries the stride; the shortcut is the identity
/// or, on a stride/width change, a strided 1×1 projection of the activated input.
pub fn residual_unit<T: Scalar>(
    ctx: &mut ForwardCtx<'_, T>,
    x: Var,
    unit: &UnitSpec,
) -> Result<Var> {
    let c = channels(ctx, x)?;
    if c != unit.in_channels {
        return Err(Error::ShapeMismatch {
            op: "residual_unit",
            left: vec![unit.in_channels],
            right: ctx.tape.value(x).shape().to_vec(),
        });
    }
    let p = &unit.prefix;
    let a = ctx.bn_relu(x, &format!("{p}.bn1"))?;
    let shortcut = if unit.has_projection() {
        ctx.conv(a, &format!("{p}.proj"), &unit.projection())?
    } else {
        x
    };
    let h = ctx.conv(a, &format!("{p}.conv1"), &unit.conv1())?;
    let h = ctx.bn_relu(h, &format!("{p}.bn2"))?;
    let h = ctx.conv(h, &format!("{p}.conv2"), &unit.conv2())?;
    let h = ctx.bn_relu(h, &format!("{p}.bn3"))?;
    let h = ctx.conv(h, &format!("{p}.conv3"), &unit.conv3())?;
    ctx.tape.add(h, shortcut)
}

pub fn residual_group<T: Scalar>(
    ctx: &mut ForwardCtx<'_, T>,
    x: Var,
    group: &GroupSpec,
) -> Result<Var> {
    if group.units.iter().skip(1).any(|u| u.stride != 1) {
        return Err(Error::invalid(
            "residual_group",
            "only the first unit may be strided",
        ));
    }
    group
        .units
        .iter()
        .try_fold(x, |h, u| residual_unit(ctx, h, u))
}

/// Strided 3×3 entry convolution followed by parallel dilated 3×3 branches,
/// each normalized and rectified, concatenated along channels.
pub fn pdc_module<T: Scalar>(ctx: &mut ForwardCtx<'_, T>, f: Var, pdc: &PdcSpec) -> Result<Var> {
    let [_, _, h, w] = ctx.tape.value(f).dims4()?;
    if h % pdc.entry_stride != 0 || w % pdc.entry_stride != 0 {
        return Err(Error::invalid(
            "pdc_module",
            format!(
                "{h}×{w} feature map is not divisible by entry stride {}",
                pdc.entry_stride
            ),
        ));
    }
    let p = &pdc.prefix;
    let e = ctx.conv(f, &format!("{p}.entry"), &pdc.entry())?;
    let e = ctx.bn_relu(e, &format!("{p}.entry_bn"))?;
    let mut branches = Vec::with_capacity(pdc.rates.len());
    for (i, &rate) in pdc.rates.iter().enumerate() {
        let name = pdc.branch_name(i);
        let b = ctx.conv(e, &name, &pdc.branch(rate))?;
        branches.push(ctx.bn_relu(b, &format!("{name}_bn"))?);
    }
    ctx.tape.concat(&branches)
}

/// Recorded outputs of a full forward pass.
#[derive(Debug, Clone, Copy)]
pub struct NetOutput {
    /// Pre-sigmoid map at input resolution.
    pub logits: Var,
    /// Probability map N×1×H×W, values in (0, 1).
    pub prob: Var,
    /// Feature maps f1..fG from the residual groups.
    pub features: [Option<Var>; 8],
    /// Fused context maps at 1/16 resolution.
    pub fused: Var,
}

pub fn mlcnet_forward<T: Scalar>(
    ctx: &mut ForwardCtx<'_, T>,
    image: Var,
    config: &ModelConfig,
) -> Result<NetOutput> {
    let [_, c, h, w] = ctx.tape.value(image).dims4()?;
    if c != config.input_channels {
        return Err(Error::ShapeMismatch {
            op: "mlcnet_forward",
            left: vec![config.input_channels],
            right: ctx.tape.value(image).shape().to_vec(),
        });
    }
    if h % INPUT_MULTIPLE != 0 || w % INPUT_MULTIPLE != 0 {
        return Err(Error::invalid(
            "mlcnet_forward",
            format!("input {h}×{w} must have both extents divisible by {INPUT_MULTIPLE}"),
        ));
    }
    let mut x = ctx.conv(image, "stem", &config.stem_spec())?;
    let mut features = Vec::new();
    for group in config.group_specs() {
        x = residual_group(ctx, x, &group)?;
        features.push(x);
    }
    let contexts = config
        .pdc_specs()
        .iter()
        .zip(&features[1..])
        .map(|(pdc, &f)| pdc_module(ctx, f, pdc))
        .collect::<Result<Vec<_>>>()?;
    let fused = ctx.tape.concat(&contexts)?;
    let training = ctx.mode == Mode::Train;
    let dropped = ctx
        .tape
        .dropout(fused, config.head.dropout_rate, ctx.dropout_seed, training)?;
    let score = ctx.conv(dropped, "head", &config.head_spec())?;
    let logits = ctx.tape.upsample(score, OUTPUT_STRIDE)?;
    let prob = ctx.tape.sigmoid(logits)?;
    let mut fs = [None; 8];
    for (slot, f) in fs.iter_mut().zip(features) {
        *slot = Some(f);
    }
    Ok(NetOutput {
        logits,
        prob,
        features: fs,
        fused,
    })
}

/// A configured network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlcNet<T> {
    config: ModelConfig,
    params: ModelParams<T>,
}

impl<T: Scalar> MlcNet<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Ok(MlcNet { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        config.check_graph()?;
        params.check_against(&config)?;
        Ok(MlcNet { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    /// Records a forward pass on `tape`, returning the outputs and the
    /// running-statistics updates it implies.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        image: Var,
        mode: Mode,
        dropout_seed: u64,
    ) -> Result<(NetOutput, Vec<BnUpdate<T>>)> {
        let mut ctx = ForwardCtx::new(tape, &self.params, mode, dropout_seed);
        let out = mlcnet_forward(&mut ctx, image, &self.config)?;
        Ok((out, ctx.into_bn_updates()))
    }

    /// Inference-mode probability map for an N×C×H×W batch.
    pub fn predict(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.input(image.clone());
        let (out, _) = self.forward(&mut tape, x, Mode::Eval, 0)?;
        Ok(tape.value(out.prob).clone())
    }

    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<T>]) -> Result<()> {
        self.params.apply_bn_updates(updates, BN_MOMENTUM)
    }
}
