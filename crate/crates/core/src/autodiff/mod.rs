//! Reverse-mode differentiation over the tensor kernels.
//!
//! A [`Tape`] records every value produced during a forward pass together
//! with the rule that maps the gradient of that value back to its inputs.
//! Nodes are appended in execution order, so walking the tape backwards is a
//! valid reverse topological order.

mod gradcheck;

pub use gradcheck::{
    check_gradients, finite_diff_grad, max_relative_error, GradCheck, SCALE_FLOOR,
};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::loss;
use crate::scalar::Scalar;
use crate::tensor::{self, BatchStats, BnMode, ConvSpec, RunningStats, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param,
    Conv2d(ConvSpec),
    Upsample(usize),
    Concat,
    Relu,
    Sigmoid,
    Add,
    Scale(T),
    Dropout(Vec<T>),
    BatchNorm { stats: BatchStats<T>, mode: BnMode },
    Sum,
    WeightedSum(Tensor<T>),
    Bce(Tensor<T>),
    Opaque(String),
}

impl<T> Op<T> {
    fn name(&self) -> &str {
        match self {
            Op::Input => "input",
            Op::Param => "param",
            Op::Conv2d(_) => "conv2d",
            Op::Upsample(_) => "bilinear_upsample",
            Op::Concat => "concat_channels",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Add => "add",
            Op::Scale(_) => "scale",
            Op::Dropout(_) => "dropout",
            Op::BatchNorm { .. } => "batchnorm2d",
            Op::Sum => "sum",
            Op::WeightedSum(_) => "weighted_sum",
            Op::Bce(_) => "bce_loss",
            Op::Opaque(name) => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    inputs: Vec<Var>,
    value: Tensor<T>,
    requires_grad: bool,
}

#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: IndexMap<String, Var>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: IndexMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<Var>, value: Tensor<T>) -> Var {
        let requires_grad =
            matches!(op, Op::Param) || inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> Result<&Tensor<T>> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or(Error::UnknownVar(v.0))
    }

    /// Value of a recorded variable. Panics if `v` belongs to another tape.
    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Input, Vec::new(), value)
    }

    /// Trainable leaf registered under a unique name.
    pub fn param(&mut self, name: &str, value: Tensor<T>) -> Result<Var> {
        if self.params.contains_key(name) {
            return Err(Error::invalid(
                "param",
                format!("`{name}` registered twice"),
            ));
        }
        let v = self.push(Op::Param, Vec::new(), value);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: &ConvSpec) -> Result<Var> {
        let bias = b.map(|b| self.val(b)).transpose()?;
        let y = tensor::conv2d(self.val(x)?, self.val(w)?, bias, spec)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(Op::Conv2d(*spec), inputs, y))
    }

    pub fn upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        let y = tensor::bilinear_upsample(self.val(x)?, factor)?;
        Ok(self.push(Op::Upsample(factor), vec![x], y))
    }

    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let vals = xs
            .iter()
            .map(|&v| self.val(v))
            .collect::<Result<Vec<_>>>()?;
        let y = tensor::concat_channels(&vals)?;
        Ok(self.push(Op::Concat, xs.to_vec(), y))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = tensor::relu(self.val(x)?);
        Ok(self.push(Op::Relu, vec![x], y))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = tensor::sigmoid(self.val(x)?);
        Ok(self.push(Op::Sigmoid, vec![x], y))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = tensor::add(self.val(a)?, self.val(b)?)?;
        Ok(self.push(Op::Add, vec![a, b], y))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let y = tensor::scale(self.val(x)?, c);
        Ok(self.push(Op::Scale(c), vec![x], y))
    }

    /// Inverted dropout; the realized mask is kept for the backward pass.
    pub fn dropout(&mut self, x: Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
        let input = self.val(x)?;
        let mut mask = tensor::dropout_mask::<T>(input.len(), rate, seed)?;
        if !training || rate == 0.0 {
            mask.iter_mut().for_each(|m| *m = T::one());
        }
        let data = input
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let y = Tensor::from_vec(input.shape().to_vec(), data)?;
        Ok(self.push(Op::Dropout(mask), vec![x], y))
    }

    /// Batch normalization; also returns the statistics that were applied.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: RunningStats<'_, T>,
        mode: BnMode,
    ) -> Result<(Var, BatchStats<T>)> {
        let out = tensor::batchnorm2d(
            self.val(x)?,
            self.val(gamma)?,
            self.val(beta)?,
            running,
            mode,
        )?;
        let stats = out.stats.clone();
        let v = self.push(
            Op::BatchNorm {
                stats: out.stats,
                mode,
            },
            vec![x, gamma, beta],
            out.output,
        );
        Ok((v, stats))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let y = Tensor::scalar(self.val(x)?.sum());
        Ok(self.push(Op::Sum, vec![x], y))
    }

    /// `Σ xᵢ·wᵢ` against a constant weight tensor of the same shape.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        let xv = self.val(x)?;
        if xv.shape() != weights.shape() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                left: xv.shape().to_vec(),
                right: weights.shape().to_vec(),
            });
        }
        let s = xv
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a * b)
            .sum();
        Ok(self.push(Op::WeightedSum(weights), vec![x], Tensor::scalar(s)))
    }

    /// Mean binary cross-entropy of a probability map against a binary target.
    pub fn bce(&mut self, pred: Var, target: Tensor<T>) -> Result<Var> {
        let l = loss::bce_loss(self.val(pred)?, &target)?;
        Ok(self.push(Op::Bce(target), vec![pred], Tensor::scalar(l)))
    }

    /// Records a value produced outside the differentiable op set. Reaching it
    /// during `backward` with a gradient that must flow further is an error.
    pub fn opaque(&mut self, name: &str, inputs: &[Var], value: Tensor<T>) -> Result<Var> {
        for &v in inputs {
            self.val(v)?;
        }
        Ok(self.push(Op::Opaque(name.to_string()), inputs.to_vec(), value))
    }

    /// Gradient of the scalar `loss` with respect to every registered parameter.
    /// Parameters the loss does not reach get zero gradients.
    pub fn backward(&self, loss: Var) -> Result<GradientSet<T>> {
        let lv = self.val(loss)?;
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Param) {
                grads[idx] = Some(g);
                continue;
            }
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            for (v, dg) in node.inputs.iter().zip(self.input_grads(node, &g, &needs)?) {
                let Some(dg) = dg else { continue };
                match &mut grads[v.0] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(dg.data())
                        .for_each(|(a, &b)| *a += b),
                    slot @ None => *slot = Some(dg),
                }
            }
        }

        let mut out = IndexMap::with_capacity(self.params.len());
        for (name, v) in &self.params {
            let g = grads
                .get_mut(v.0)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(self.nodes[v.0].value.shape()));
            out.insert(name.clone(), g);
        }
        Ok(GradientSet { grads: out })
    }

    fn input_grads(
        &self,
        node: &Node<T>,
        g: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let inp = |i: usize| &self.nodes[node.inputs[i].0].value;
        let like = |shape: &[usize], data: Vec<T>| Tensor::from_vec(shape.to_vec(), data);
        Ok(match &node.op {
            Op::Input | Op::Param => Vec::new(),
            Op::Conv2d(spec) => {
                let cg = tensor::conv2d_backward(inp(0), inp(1), spec, g, needs[0])?;
                let mut v = vec![cg.input, Some(cg.weight)];
                if node.inputs.len() == 3 {
                    v.push(cg.bias);
                }
                v
            }
            Op::Upsample(f) => vec![Some(tensor::bilinear_upsample_backward(
                g,
                inp(0).shape(),
                *f,
            )?)],
            Op::Concat => {
                let mut start = 0;
                let mut v = Vec::with_capacity(node.inputs.len());
                for (i, &need) in needs.iter().enumerate() {
                    let c = inp(i).shape()[1];
                    v.push(if need {
                        Some(g.slice_channels(start, c)?)
                    } else {
                        None
                    });
                    start += c;
                }
                v
            }
            Op::Relu => {
                let x = inp(0).data();
                let data = g
                    .data()
                    .iter()
                    .zip(x)
                    .map(|(&d, &x)| if x > T::zero() { d } else { T::zero() });
                vec![Some(like(g.shape(), data.collect())?)]
            }
            Op::Sigmoid => {
                let y = node.value.data();
                let data = g
                    .data()
                    .iter()
                    .zip(y)
                    .map(|(&d, &p)| d * p * (T::one() - p));
                vec![Some(like(g.shape(), data.collect())?)]
            }
            Op::Add => vec![needs[0].then(|| g.clone()), needs[1].then(|| g.clone())],
            Op::Scale(c) => vec![Some(tensor::scale(g, *c))],
            Op::Dropout(mask) => {
                let data = g.data().iter().zip(mask).map(|(&d, &m)| d * m);
                vec![Some(like(g.shape(), data.collect())?)]
            }
            Op::BatchNorm { stats, mode } => {
                let bg = tensor::batchnorm2d_backward(inp(0), inp(1), stats, g, *mode)?;
                vec![Some(bg.input), Some(bg.gamma), Some(bg.beta)]
            }
            Op::Sum => vec![Some(Tensor::full(inp(0).shape(), g.data()[0]))],
            Op::WeightedSum(w) => vec![Some(tensor::scale(w, g.data()[0]))],
            Op::Bce(target) => {
                let d = loss::bce_loss_grad(inp(0), target)?;
                vec![Some(tensor::scale(&d, g.data()[0]))]
            }
            Op::Opaque(_) => return Err(Error::UnregisteredOp(node.op.name().to_string())),
        })
    }
}

/// Gradient per trainable parameter name, each shaped like its parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    grads: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor<T>) {
        self.grads.insert(name.into(), grad);
    }

    pub fn from_map(grads: IndexMap<String, Tensor<T>>) -> Self {
        GradientSet { grads }
    }
}

impl<T: Scalar> FromIterator<(String, Tensor<T>)> for GradientSet<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        GradientSet {
            grads: iter.into_iter().collect(),
        }
    }
}
