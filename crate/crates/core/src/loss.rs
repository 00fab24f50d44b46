//! Pixel-wise binary cross-entropy on probability maps.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

fn check<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "bce_loss",
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    if let Some(v) = target
        .data()
        .iter()
        .find(|&&t| t != T::zero() && t != T::one())
    {
        return Err(Error::invalid(
            "bce_loss",
            format!("target value {v} is not binary"),
        ));
    }
    if let Some(v) = pred
        .data()
        .iter()
        .find(|&&p| !(p >= T::zero() && p <= T::one()))
    {
        return Err(Error::invalid(
            "bce_loss",
            format!("prediction {v} outside [0, 1]"),
        ));
    }
    Ok(())
}

/// Mean over pixels of `−[t·ln p + (1−t)·ln(1−p)]`.
pub fn bce_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    check(pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = p.to_f64_lossy().clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if t == T::one() {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(T::from_f64_lossy(total / pred.len() as f64))
}

/// Gradient of [`bce_loss`] with respect to `pred`; zero where the clamp is active.
pub fn bce_loss_grad<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    check(pred, target)?;
    let n = pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = p.to_f64_lossy();
            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                return T::zero();
            }
            let g = if t == T::one() {
                -1.0 / p
            } else {
                1.0 / (1.0 - p)
            };
            T::from_f64_lossy(g / n)
        })
        .collect();
    Tensor::from_vec(pred.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_grad, max_relative_error, Tape};

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let target = t(&[1.0, 0.0, 1.0, 0.0]);
        assert!(bce_loss(&target, &target).unwrap() <= 1e-6);
    }

    #[test]
    fn uniform_half_is_ln2() {
        for target in [
            t(&[1.0, 0.0, 0.0]),
            t(&[1.0, 1.0, 1.0]),
            t(&[0.0, 0.0, 0.0]),
        ] {
            let pred = Tensor::full(&[3], 0.5);
            assert!((bce_loss(&pred, &target).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
        }
    }

    #[test]
    fn two_pixel_hand_value() {
        let l = bce_loss(&t(&[0.9, 0.2]), &t(&[1.0, 0.0])).unwrap();
        let expect = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((l - expect).abs() < 1e-12);
        assert!((l - 0.16425).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(bce_loss(&t(&[0.5]), &t(&[1.0, 0.0])).is_err());
        assert!(bce_loss(&t(&[0.5, 0.5]), &t(&[1.0, 0.5])).is_err());
        assert!(bce_loss(&t(&[1.5, 0.5]), &t(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pred = t(&[0.73, 0.21]);
        let target = t(&[1.0, 0.0]);
        let fd = finite_diff_grad(|p| bce_loss(p, &target), &pred, 1e-6).unwrap();

        let mut tape = Tape::new();
        let p = tape.param("p", pred.clone()).unwrap();
        let l = tape.bce(p, target.clone()).unwrap();
        let g = tape.backward(l).unwrap();
        assert!(max_relative_error(g.get("p").unwrap(), &fd) <= 1e-5);
    }

    #[test]
    fn non_negative() {
        let target = t(&[1.0, 0.0, 1.0]);
        for p in [0.0, 1e-9, 0.3, 0.999999, 1.0] {
            assert!(bce_loss(&Tensor::full(&[3], p), &target).unwrap() >= 0.0);
        }
    }
}
