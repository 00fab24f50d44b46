//! Bias-corrected Adam.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::autodiff::GradientSet;
use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates, keyed by parameter name and created lazily on the
/// first step that touches a parameter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub hyper: AdamHyper,
    m: IndexMap<String, Tensor<T>>,
    v: IndexMap<String, Tensor<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(hyper: AdamHyper) -> Self {
        AdamState {
            hyper,
            m: IndexMap::new(),
            v: IndexMap::new(),
            t: 0,
        }
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor<T>> {
        self.m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor<T>> {
        self.v.get(name)
    }
}

/// One Adam update of every trainable tensor in `params`.
///
/// Each element is updated independently, so the result does not depend on
/// the order in which parameters are visited.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &GradientSet<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    // validate before mutating anything
    for (name, p) in params.trainable() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::MissingGradient(name.to_string()))?;
        if g.shape() != p.shape() {
            return Err(Error::invalid(
                "adam_step",
                format!(
                    "gradient for `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                ),
            ));
        }
    }
    state.t += 1;
    let h = state.hyper;
    let t = state.t as i32;
    let b1 = T::from_f64_lossy(h.beta1);
    let b2 = T::from_f64_lossy(h.beta2);
    let one = T::one();
    let c1 = T::from_f64_lossy(1.0 - h.beta1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - h.beta2.powi(t));
    let lr = T::from_f64_lossy(h.lr);
    let eps = T::from_f64_lossy(h.epsilon);

    for (name, p) in params.iter_mut() {
        if !crate::nn::is_trainable(name) {
            continue;
        }
        let g = grads.get(name).expect("checked above");
        let m = state
            .m
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        let v = state
            .v
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        for (((w, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
