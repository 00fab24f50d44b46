use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Variance epsilon used inside the batch-norm square root.
pub const BN_EPS: f64 = 1e-5;

// ---------------------------------------------------------------------------
// bilinear upsampling (align-corners)

/// Source index pair and interpolation weight for each output coordinate.
fn axis_table(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    (0..output)
        .map(|o| {
            if input == 1 || output == 1 {
                return (0, 0, 0.0);
            }
            // o·(in−1)/(out−1), kept exact for integer-aligned positions
            let num = o * (input - 1);
            let den = output - 1;
            let i0 = num / den;
            let frac = (num % den) as f64 / den as f64;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, frac)
        })
        .collect()
}

pub fn bilinear_upsample<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::invalid(
            "bilinear_upsample",
            "factor must be at least 1",
        ));
    }
    let [n, c, h, w] = input.dims4()?;
    if factor == 1 {
        return Ok(input.clone());
    }
    let (oh, ow) = (h * factor, w * factor);
    let ty = axis_table(h, oh);
    let tx = axis_table(w, ow);
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in src.chunks(h * w) {
        for &(y0, y1, wy) in &ty {
            let wy = T::from_f64_lossy(wy);
            let r0 = &plane[y0 * w..(y0 + 1) * w];
            let r1 = &plane[y1 * w..(y1 + 1) * w];
            for &(x0, x1, wx) in &tx {
                let wx = T::from_f64_lossy(wx);
                let top = r0[x0] + wx * (r0[x1] - r0[x0]);
                let bottom = r1[x0] + wx * (r1[x1] - r1[x0]);
                out.push(top + wy * (bottom - top));
            }
        }
    }
    Tensor::from_vec(vec![n, c, oh, ow], out)
}

pub fn bilinear_upsample_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input_shape: &[usize],
    factor: usize,
) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::invalid(
            "bilinear_upsample",
            "factor must be at least 1",
        ));
    }
    let [n, c, h, w] = match input_shape {
        &[n, c, h, w] => [n, c, h, w],
        _ => {
            return Err(Error::invalid(
                "bilinear_upsample_backward",
                "input must be rank 4",
            ))
        }
    };
    let (oh, ow) = (h * factor, w * factor);
    if grad_out.shape() != [n, c, oh, ow] {
        return Err(Error::ShapeMismatch {
            op: "bilinear_upsample_backward",
            left: vec![n, c, oh, ow],
            right: grad_out.shape().to_vec(),
        });
    }
    if factor == 1 {
        return Ok(grad_out.clone());
    }
    let ty = axis_table(h, oh);
    let tx = axis_table(w, ow);
    let mut grad = vec![T::zero(); n * c * h * w];
    for (g, dy) in grad.chunks_mut(h * w).zip(grad_out.data().chunks(oh * ow)) {
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            let wy = T::from_f64_lossy(wy);
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let wx = T::from_f64_lossy(wx);
                let d = dy[oy * ow + ox];
                let top = d * (T::one() - wy);
                let bottom = d * wy;
                g[y0 * w + x0] += top * (T::one() - wx);
                g[y0 * w + x1] += top * wx;
                g[y1 * w + x0] += bottom * (T::one() - wx);
                g[y1 * w + x1] += bottom * wx;
            }
        }
    }
    Tensor::from_vec(input_shape.to_vec(), grad)
}

// ---------------------------------------------------------------------------
// channel concatenation

pub fn concat_channels<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::invalid("concat_channels", "no inputs"))?;
    let [n, _, h, w] = first.dims4()?;
    let mut total = 0;
    for t in inputs {
        let [tn, tc, th, tw] = t.dims4()?;
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                left: first.shape().to_vec(),
                right: t.shape().to_vec(),
            });
        }
        total += tc;
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(n * total * plane);
    for b in 0..n {
        for t in inputs {
            let per = t.shape()[1] * plane;
            out.extend_from_slice(&t.data()[b * per..(b + 1) * per]);
        }
    }
    Tensor::from_vec(vec![n, total, h, w], out)
}

// ---------------------------------------------------------------------------
// pointwise

#[derive(Debug, Clone, Copy)]
pub enum Pointwise<'a, T> {
    Relu,
    Sigmoid,
    Add(&'a Tensor<T>),
    Scale(T),
}

pub fn pointwise<T: Scalar>(input: &Tensor<T>, kind: Pointwise<'_, T>) -> Result<Tensor<T>> {
    match kind {
        Pointwise::Relu => Ok(relu(input)),
        Pointwise::Sigmoid => Ok(sigmoid(input)),
        Pointwise::Add(other) => add(input, other),
        Pointwise::Scale(c) => Ok(scale(input, c)),
    }
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    // written so NaN passes through rather than being zeroed
    input.map(|v| if v < T::zero() { T::zero() } else { v })
}

/// Logistic function, saturated so results stay strictly inside (0, 1).
pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let lo = T::min_positive_value();
    let hi = T::one() - T::epsilon() / (T::one() + T::one());
    input.map(|v| {
        let s = if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        };
        // comparisons rather than max/min so NaN propagates
        if s < lo {
            lo
        } else if s > hi {
            hi
        } else {
            s
        }
    })
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "add",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x + y)
        .collect();
    Tensor::from_vec(a.shape().to_vec(), data)
}

pub fn scale<T: Scalar>(input: &Tensor<T>, c: T) -> Tensor<T> {
    input.map(|v| v * c)
}

// ---------------------------------------------------------------------------
// dropout

/// Inverted-dropout multipliers: `0` with probability `rate`, else `1/(1−rate)`.
pub fn dropout_mask<T: Scalar>(len: usize, rate: f64, seed: u64) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(
            "dropout",
            format!("rate {rate} outside [0, 1)"),
        ));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect())
}

pub fn dropout<T: Scalar>(
    input: &Tensor<T>,
    rate: f64,
    seed: u64,
    training: bool,
) -> Result<Tensor<T>> {
    let mask = dropout_mask::<T>(input.len(), rate, seed)?;
    if !training || rate == 0.0 {
        return Ok(input.clone());
    }
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&x, &m)| x * m)
        .collect();
    Tensor::from_vec(input.shape().to_vec(), data)
}

// ---------------------------------------------------------------------------
// batch normalization

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize by the statistics of the current batch.
    Training,
    /// Normalize by the running statistics.
    Inference,
}

#[derive(Debug, Clone, Copy)]
pub struct RunningStats<'a, T> {
    pub mean: &'a Tensor<T>,
    pub var: &'a Tensor<T>,
}

/// Per-channel statistics used for one normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance of the batch, or the running variance.
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
    /// Values per channel (N·H·W).
    pub count: usize,
}

impl<T: Scalar> BatchStats<T> {
    /// Unbiased variance estimate for running-statistics tracking.
    pub fn unbiased_var(&self) -> Vec<T> {
        let n = self.count as f64;
        let corr = if self.count > 1 { n / (n - 1.0) } else { 1.0 };
        self.var
            .iter()
            .map(|&v| v * T::from_f64_lossy(corr))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormOutput<T> {
    pub output: Tensor<T>,
    /// Statistics applied; batch statistics in training mode.
    pub stats: BatchStats<T>,
}

fn check_channel_vec<T: Scalar>(t: &Tensor<T>, c: usize, what: &'static str) -> Result<()> {
    if t.shape() != [c] {
        return Err(Error::ShapeMismatch {
            op: what,
            left: vec![c],
            right: t.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn batchnorm2d<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: RunningStats<'_, T>,
    mode: BnMode,
) -> Result<BatchNormOutput<T>> {
    let [n, c, h, w] = input.dims4()?;
    check_channel_vec(gamma, c, "batchnorm2d gamma")?;
    check_channel_vec(beta, c, "batchnorm2d beta")?;
    check_channel_vec(running.mean, c, "batchnorm2d running mean")?;
    check_channel_vec(running.var, c, "batchnorm2d running var")?;
    let plane = h * w;
    let count = n * plane;
    let x = input.data();

    let (mean, var) = match mode {
        BnMode::Training => {
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for ch in 0..c {
                let vals =
                    (0..n).flat_map(|b| x[(b * c + ch) * plane..(b * c + ch + 1) * plane].iter());
                let m = vals.clone().map(|v| v.to_f64_lossy()).sum::<f64>() / count as f64;
                let v = vals.map(|v| (v.to_f64_lossy() - m).powi(2)).sum::<f64>() / count as f64;
                mean[ch] = m;
                var[ch] = v;
            }
            (
                mean.into_iter().map(T::from_f64_lossy).collect::<Vec<T>>(),
                var.into_iter().map(T::from_f64_lossy).collect::<Vec<T>>(),
            )
        }
        BnMode::Inference => (running.mean.data().to_vec(), running.var.data().to_vec()),
    };
    let eps = T::from_f64_lossy(BN_EPS);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let (m, s, g, be) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
            for (o, &v) in out[off..off + plane].iter_mut().zip(&x[off..off + plane]) {
                *o = (v - m) * s * g + be;
            }
        }
    }
    Ok(BatchNormOutput {
        output: Tensor::from_vec(input.shape().to_vec(), out)?,
        stats: BatchStats {
            mean,
            var,
            inv_std,
            count,
        },
    })
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Gradients of `batchnorm2d`; in training mode the batch statistics depend
/// on the input and contribute to its gradient.
pub fn batchnorm2d_backward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    stats: &BatchStats<T>,
    grad_out: &Tensor<T>,
    mode: BnMode,
) -> Result<BatchNormGrads<T>> {
    let [n, c, h, w] = input.dims4()?;
    check_channel_vec(gamma, c, "batchnorm2d gamma")?;
    if grad_out.shape() != input.shape() {
        return Err(Error::ShapeMismatch {
            op: "batchnorm2d_backward",
            left: input.shape().to_vec(),
            right: grad_out.shape().to_vec(),
        });
    }
    let plane = h * w;
    let count = (n * plane) as f64;
    let (x, dy) = (input.data(), grad_out.data());
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let (m, s) = (
            stats.mean[ch].to_f64_lossy(),
            stats.inv_std[ch].to_f64_lossy(),
        );
        let g = gamma.data()[ch].to_f64_lossy();
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                let d = dy[i].to_f64_lossy();
                sum_dy += d;
                sum_dy_xhat += d * (x[i].to_f64_lossy() - m) * s;
            }
        }
        dgamma[ch] = T::from_f64_lossy(sum_dy_xhat);
        dbeta[ch] = T::from_f64_lossy(sum_dy);
        for b in 0..n {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                let d = dy[i].to_f64_lossy();
                let v = match mode {
                    BnMode::Training => {
                        let xhat = (x[i].to_f64_lossy() - m) * s;
                        g * s * (d - sum_dy / count - xhat * sum_dy_xhat / count)
                    }
                    BnMode::Inference => g * s * d,
                };
                dx[i] = T::from_f64_lossy(v);
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_vec(input.shape().to_vec(), dx)?,
        gamma: Tensor::from_vec(vec![c], dgamma)?,
        beta: Tensor::from_vec(vec![c], dbeta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn upsample_constant_and_identity() {
        let x = Tensor::<f32>::full(&[1, 1, 2, 2], 0.3712);
        let y = bilinear_upsample(&x, 16).unwrap();
        assert_eq!(y.shape(), &[1, 1, 32, 32]);
        assert!(y.data().iter().all(|&v| v == 0.3712));

        let r = Tensor::<f32>::from_fn(&[2, 3, 3, 5], |i| i as f32);
        assert_eq!(bilinear_upsample(&r, 1).unwrap(), r);
        assert!(bilinear_upsample(&r, 0).is_err());
    }

    #[test]
    fn upsample_align_corners_column() {
        // positions 0, 1/3, 2/3, 1 along a [0, 1] column
        let x = Tensor::<f64>::from_vec(vec![1, 1, 2, 1], vec![0.0, 1.0]).unwrap();
        let y = bilinear_upsample(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 2]);
        let col: Vec<f64> = (0..4).map(|r| y.data()[r * 2]).collect();
        let expect = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (a, b) in col.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn upsample_backward_conserves_mass() {
        let x = Tensor::<f64>::zeros(&[1, 2, 3, 4]);
        let g = Tensor::<f64>::from_fn(&[1, 2, 12, 16], |i| (i % 7) as f64 - 3.0);
        let dx = bilinear_upsample_backward(&g, x.shape(), 4).unwrap();
        assert!((dx.sum() - g.sum()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn upsample_preserves_linear_ramps(h in 2usize..6, w in 2usize..6, f in 1usize..6, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            // align-corners maps the input grid onto [0, out−1] exactly
            let x = Tensor::<f64>::from_fn(&[1, 1, h, w], |i| a * (i / w) as f64 + b * (i % w) as f64);
            let y = bilinear_upsample(&x, f).unwrap();
            let (oh, ow) = (h * f, w * f);
            for oy in 0..oh {
                for ox in 0..ow {
                    let sy = oy as f64 * (h - 1) as f64 / (oh - 1) as f64;
                    let sx = ox as f64 * (w - 1) as f64 / (ow - 1) as f64;
                    prop_assert!((y.data()[oy * ow + ox] - (a * sy + b * sx)).abs() <= 1e-6);
                }
            }
        }

        #[test]
        fn concat_then_slice_recovers_inputs(c1 in 1usize..4, c2 in 1usize..4, n in 1usize..3, seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor::<f32>::from_fn(&[n, c1, 3, 2], |_| rng.random());
            let b = Tensor::<f32>::from_fn(&[n, c2, 3, 2], |_| rng.random());
            let cat = concat_channels(&[&a, &b]).unwrap();
            prop_assert_eq!(cat.slice_channels(0, c1).unwrap(), a);
            prop_assert_eq!(cat.slice_channels(c1, c2).unwrap(), b);
        }

        #[test]
        fn ops_keep_values_finite(seed in 0u64..300, big in prop::bool::ANY) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amp = if big { 1e4f32 } else { 1.0 };
            let x = Tensor::<f32>::from_fn(&[2, 3, 4, 4], |_| rng.random_range(-amp..amp));
            let g = Tensor::ones(&[3]);
            let be = Tensor::zeros(&[3]);
            let rs = RunningStats { mean: &be, var: &g };
            let outs = [
                relu(&x),
                sigmoid(&x),
                scale(&x, -2.5),
                bilinear_upsample(&x, 3).unwrap(),
                dropout(&x, 0.5, seed, true).unwrap(),
                batchnorm2d(&x, &g, &be, rs, BnMode::Training).unwrap().output,
                batchnorm2d(&x, &g, &be, rs, BnMode::Inference).unwrap().output,
                concat_channels(&[&x, &x]).unwrap(),
            ];
            for o in &outs {
                prop_assert!(o.is_finite());
            }
        }
    }

    #[test]
    fn concat_examples() {
        let a = Tensor::<f32>::from_vec(vec![1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
        let b = Tensor::<f32>::from_vec(vec![1, 2, 1, 1], vec![3.0, 4.0]).unwrap();
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        let ab = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(ab.shape(), &[1, 4, 1, 1]);
        assert_eq!(ab.data(), &[1.0, 2.0, 3.0, 4.0]);

        let four: Vec<Tensor<f32>> = (0..4).map(|_| Tensor::zeros(&[1, 64, 16, 16])).collect();
        let refs: Vec<&Tensor<f32>> = four.iter().collect();
        assert_eq!(concat_channels(&refs).unwrap().shape(), &[1, 256, 16, 16]);

        let bad = Tensor::<f32>::zeros(&[1, 1, 2, 1]);
        assert!(concat_channels(&[&a, &bad]).is_err());
        assert!(concat_channels::<f32>(&[]).is_err());
    }

    #[test]
    fn pointwise_examples() {
        let x = Tensor::<f32>::from_vec(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(
            pointwise(&x, Pointwise::Relu).unwrap().data(),
            &[0.0, 0.0, 2.0]
        );
        assert_eq!(sigmoid(&Tensor::<f64>::scalar(0.0)).data(), &[0.5]);
        let z = Tensor::zeros(&[3]);
        assert_eq!(pointwise(&x, Pointwise::Add(&z)).unwrap(), x);
        assert_eq!(
            pointwise(&x, Pointwise::Scale(2.0)).unwrap().data(),
            &[-2.0, 0.0, 4.0]
        );
        assert!(add(&x, &Tensor::zeros(&[2])).is_err());

        let s = sigmoid(&Tensor::<f32>::from_vec(vec![2], vec![-1e4, 1e4]).unwrap());
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn dropout_modes() {
        let x = Tensor::<f32>::from_fn(&[1, 2, 3, 3], |i| i as f32);
        assert_eq!(dropout(&x, 0.0, 1, true).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, 1, false).unwrap(), x);
        assert_eq!(dropout(&x, 0.5, 1, false).unwrap(), x);
        assert!(dropout(&x, 1.0, 1, false).is_err());
        assert_eq!(
            dropout(&x, 0.5, 9, true).unwrap(),
            dropout(&x, 0.5, 9, true).unwrap()
        );

        // Monte-Carlo expectation of inverted dropout is the input itself.
        let ones = Tensor::<f64>::ones(&[1_000_000]);
        let y = dropout(&ones, 0.5, 42, true).unwrap();
        assert!((y.mean() - 1.0).abs() < 0.01, "mean {}", y.mean());
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn batchnorm_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::from_fn(&[2, 3, 4, 4], |_| rng.random_range(-2.0..5.0));
        let ones = Tensor::ones(&[3]);
        let zeros = Tensor::zeros(&[3]);
        let rs = RunningStats {
            mean: &zeros,
            var: &ones,
        };

        let y = batchnorm2d(&x, &ones, &zeros, rs, BnMode::Training)
            .unwrap()
            .output;
        for ch in 0..3 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| y.data()[(b * 3 + ch) * 16..(b * 3 + ch + 1) * 16].to_vec())
                .collect();
            let m = vals.iter().sum::<f64>() / 32.0;
            let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 32.0;
            assert!(m.abs() <= 1e-6);
            assert!((v - 1.0).abs() <= 1e-4);
        }

        // zero-mean unit-variance input passes through unchanged
        let z = Tensor::<f64>::from_vec(vec![1, 1, 2, 2], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let (o1, z1) = (Tensor::ones(&[1]), Tensor::zeros(&[1]));
        let rs1 = RunningStats {
            mean: &z1,
            var: &o1,
        };
        let y = batchnorm2d(&z, &o1, &z1, rs1, BnMode::Training)
            .unwrap()
            .output;
        assert!(y.max_abs_diff(&z).unwrap() <= 1e-5);

        // gamma = 0 broadcasts beta
        let beta = Tensor::from_vec(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = batchnorm2d(&x, &zeros, &beta, rs, BnMode::Training)
            .unwrap()
            .output;
        for (i, &v) in y.data().iter().enumerate() {
            assert_eq!(v, beta.data()[(i / 16) % 3]);
        }

        assert!(batchnorm2d(&x, &Tensor::ones(&[2]), &zeros, rs, BnMode::Training).is_err());
    }

    #[test]
    fn activations_propagate_nan() {
        let x = Tensor::from_vec(vec![3], vec![f32::NAN, -1.0, 1.0]).unwrap();
        assert!(relu(&x).data()[0].is_nan());
        assert!(sigmoid(&x).data()[0].is_nan());
        assert_eq!(relu(&x).data()[1..], [0.0, 1.0]);
    }
}
