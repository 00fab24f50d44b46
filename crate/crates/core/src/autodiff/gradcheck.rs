//! Central finite differences, the verification oracle for [`Tape::backward`].

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn central<T: Scalar>(
    f: &mut impl FnMut(&Tensor<T>) -> Result<T>,
    x: &mut Tensor<T>,
    idx: usize,
    eps: T,
) -> Result<T> {
    let orig = x.data()[idx];
    x.data_mut()[idx] = orig + eps;
    let up = f(x)?;
    x.data_mut()[idx] = orig - eps;
    let down = f(x)?;
    x.data_mut()[idx] = orig;
    Ok((up - down) / (eps + eps))
}

/// `(f(x+εeᵢ) − f(x−εeᵢ)) / 2ε` for every element `i` of `x`.
pub fn finite_diff_grad<T: Scalar>(
    mut f: impl FnMut(&Tensor<T>) -> Result<T>,
    x: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    // also rejects NaN
    if eps.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::invalid("finite_diff_grad", "eps must be positive"));
    }
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        out.push(central(&mut f, &mut probe, i, eps)?);
    }
    Tensor::from_vec(x.shape().to_vec(), out)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Largest `|a−b| / max(|a|, |b|, 1e-8)` over corresponding elements.
pub fn max_relative_error<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_relative_error shapes");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| rel_err(x.to_f64_lossy(), y.to_f64_lossy()))
        .fold(0.0, f64::max)
}

/// Elements whose gradient is tiny next to the rest of the instance are
/// compared against this fraction of the largest numeric gradient seen in
/// the check rather than against their own magnitude, where
/// finite-difference noise would dominate.
pub const SCALE_FLOOR: f64 = 1e-3;

/// Outcome of comparing tape gradients against finite differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Largest `|a−n| / max(|a|, |n|, SCALE_FLOOR·max|n|, 1e-8)` over probed
    /// elements, with `max|n|` taken over every probed element of every input.
    pub max_rel_error: f64,
    /// `(input name, flat index, analytic, numeric)` at the worst element.
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
}

/// Builds `loss = build(tape, inputs)` with every input registered as a
/// parameter and compares `backward` against central differences.
///
/// When `max_per_input` is set, only that many evenly spaced elements of each
/// input are probed.
pub fn check_gradients<T: Scalar>(
    inputs: &[(&str, Tensor<T>)],
    build: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    eps: T,
    max_per_input: Option<usize>,
) -> Result<GradCheck> {
    let run = |vals: &[Tensor<T>]| -> Result<(Tape<T>, Var)> {
        let mut tape = Tape::new();
        let vars = inputs
            .iter()
            .zip(vals)
            .map(|((name, _), v)| tape.param(name, v.clone()))
            .collect::<Result<Vec<_>>>()?;
        let loss = build(&mut tape, &vars)?;
        Ok((tape, loss))
    };

    let vals: Vec<Tensor<T>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let (tape, loss) = run(&vals)?;
    let grads = tape.backward(loss)?;

    let mut pairs = Vec::new();
    for (k, (name, _)) in inputs.iter().enumerate() {
        let analytic = grads
            .get(name)
            .ok_or_else(|| Error::MissingGradient(name.to_string()))?;
        let n = vals[k].len();
        let step = max_per_input.map_or(1, |m| n.div_ceil(m.max(1)));
        for idx in (0..n).step_by(step) {
            let mut probe = vals[k].clone();
            let mut f = |t: &Tensor<T>| -> Result<T> {
                let mut vs = vals.clone();
                vs[k] = t.clone();
                let (tape, l) = run(&vs)?;
                Ok(tape.value(l).data()[0])
            };
            let numeric = central(&mut f, &mut probe, idx, eps)?.to_f64_lossy();
            pairs.push((*name, idx, analytic.data()[idx].to_f64_lossy(), numeric));
        }
    }
    let scale = pairs.iter().map(|p| p.3.abs()).fold(0.0, f64::max);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: pairs.len(),
    };
    for (name, idx, a, num) in pairs {
        let e = (a - num).abs() / a.abs().max(num.abs()).max(SCALE_FLOOR * scale).max(1e-8);
        if e > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = Some((name.to_string(), idx, a, num));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::<f64>::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
        let g = finite_diff_grad(|t| Ok(t.data().iter().map(|v| v * v).sum()), &x, 1e-4).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-6);
        assert!((g.data()[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::<f64>::from_fn(&[3, 2], |i| i as f64);
        let g = finite_diff_grad(|_| Ok(4.2), &x, 1e-3).unwrap();
        assert_eq!(g, Tensor::zeros(&[3, 2]));
        assert!(finite_diff_grad(|_| Ok(0.0), &x, 0.0).is_err());
    }

    #[test]
    fn relative_error_floor() {
        let a = Tensor::<f64>::from_vec(vec![2], vec![1e-12, 1.0]).unwrap();
        let b = Tensor::<f64>::from_vec(vec![2], vec![0.0, 1.0 + 1e-9]).unwrap();
        assert!(max_relative_error(&a, &b) < 1e-3);
    }
}
