//! 2-D cross-correlation with zero padding, stride and dilation, lowered to
//! im2col + GEMM per image.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub dilation: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Square `k×k` kernel, stride 1, no padding, no dilation, no bias.
    pub fn new(in_channels: usize, out_channels: usize, k: usize) -> Self {
        ConvSpec {
            kernel: (k, k),
            stride: (1, 1),
            padding: (0, 0),
            dilation: (1, 1),
            in_channels,
            out_channels,
            has_bias: false,
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = (s, s);
        self
    }

    pub fn padding(mut self, p: usize) -> Self {
        self.padding = (p, p);
        self
    }

    pub fn dilation(mut self, d: usize) -> Self {
        self.dilation = (d, d);
        self
    }

    pub fn bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    /// Padding that keeps the spatial extent at stride 1 for odd kernels.
    pub fn same_padding(self) -> Self {
        let p = self.dilation.0 * (self.kernel.0 - 1) / 2;
        self.padding(p)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn param_count(&self) -> usize {
        let w: usize = self.weight_shape().iter().product();
        w + if self.has_bias { self.out_channels } else { 0 }
    }

    /// Dilated kernel footprint `(dh·(kh−1)+1, dw·(kw−1)+1)`.
    pub fn effective_kernel(&self) -> (usize, usize) {
        (
            self.dilation.0 * (self.kernel.0 - 1) + 1,
            self.dilation.1 * (self.kernel.1 - 1) + 1,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.kernel.0 >= 1
            && self.kernel.1 >= 1
            && self.stride.0 >= 1
            && self.stride.1 >= 1
            && self.dilation.0 >= 1
            && self.dilation.1 >= 1
            && self.in_channels >= 1
            && self.out_channels >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "conv2d",
                format!("degenerate spec {self:?}"),
            ))
        }
    }

    /// Output extents `floor((H + 2p − d(k−1) − 1)/s) + 1` along each axis.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let axis = |len: usize, k: usize, s: usize, p: usize, d: usize| -> Option<usize> {
            let span = (len + 2 * p) as isize - (d * (k - 1)) as isize - 1;
            (span >= 0).then(|| span as usize / s + 1)
        };
        let oh = axis(
            h,
            self.kernel.0,
            self.stride.0,
            self.padding.0,
            self.dilation.0,
        );
        let ow = axis(
            w,
            self.kernel.1,
            self.stride.1,
            self.padding.1,
            self.dilation.1,
        );
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::EmptyOutput {
                op: "conv2d",
                input: vec![h, w],
            }),
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.stride == (1, 1) && self.padding == (0, 0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    dh: usize,
    dw: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Output columns `[lo, hi)` whose input column `ox·sw + off` is in range.
    fn valid_ox(&self, off: isize) -> (usize, usize) {
        let sw = self.sw as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + sw - 1) / sw };
        let hi_excl = (self.w as isize - off + sw - 1).div_euclid(sw);
        let lo = lo.clamp(0, self.ow as isize) as usize;
        let hi = hi_excl.clamp(0, self.ow as isize) as usize;
        (lo, hi.max(lo))
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geom, cols: &mut [T]) {
    let p = g.cols();
    for ch in 0..g.c {
        let plane = &x[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ch * g.kh + ki) * g.kw + kj;
                let dst_row = &mut cols[row * p..(row + 1) * p];
                let off = (kj * g.dw) as isize - g.pw as isize;
                let (lo, hi) = g.valid_ox(off);
                for oy in 0..g.oh {
                    let dst = &mut dst_row[oy * g.ow..(oy + 1) * g.ow];
                    let iy = (oy * g.sh + ki * g.dh) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if hi == lo {
                        continue;
                    }
                    if g.sw == 1 {
                        let s0 = (lo as isize + off) as usize;
                        dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    } else {
                        for ox in lo..hi {
                            dst[ox] = src[(ox as isize * g.sw as isize + off) as usize];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &Geom, x: &mut [T]) {
    let p = g.cols();
    x.fill(T::zero());
    for ch in 0..g.c {
        let plane = &mut x[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ch * g.kh + ki) * g.kw + kj;
                let src_row = &cols[row * p..(row + 1) * p];
                let off = (kj * g.dw) as isize - g.pw as isize;
                let (lo, hi) = g.valid_ox(off);
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ki * g.dh) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &src_row[oy * g.ow..(oy + 1) * g.ow];
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, &v) in src.iter().enumerate().take(hi).skip(lo) {
                        let ix = (ox as isize * g.sw as isize + off) as usize;
                        dst[ix] += v;
                    }
                }
            }
        }
    }
}

fn check_operands<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Geom> {
    spec.validate()?;
    let [_, c, h, w] = input.dims4()?;
    let wshape = spec.weight_shape();
    if c != spec.in_channels || weight.shape() != wshape {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            left: input.shape().to_vec(),
            right: weight.shape().to_vec(),
        });
    }
    match (bias, spec.has_bias) {
        (Some(b), true) if b.shape() == [spec.out_channels] => {}
        (None, false) => {}
        (Some(b), _) => {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                left: vec![spec.out_channels],
                right: b.shape().to_vec(),
            })
        }
        (None, true) => {
            return Err(Error::invalid(
                "conv2d",
                "spec has a bias but none was given",
            ))
        }
    }
    let (oh, ow) = spec.output_hw(h, w)?;
    Ok(Geom {
        c,
        h,
        w,
        kh: spec.kernel.0,
        kw: spec.kernel.1,
        sh: spec.stride.0,
        sw: spec.stride.1,
        ph: spec.padding.0,
        pw: spec.padding.1,
        dh: spec.dilation.0,
        dw: spec.dilation.1,
        oh,
        ow,
    })
}

/// Cross-correlation of `input` (N×Cin×H×W) with `weight` (Cout×Cin×kh×kw).
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let g = check_operands(input, weight, bias, spec)?;
    let [n, ..] = input.dims4()?;
    let cout = spec.out_channels;
    let (k, p) = (g.rows(), g.cols());
    let pointwise = spec.is_pointwise();
    let mut out = vec![T::zero(); n * cout * p];
    out.par_chunks_mut(cout * p)
        .zip(input.data().par_chunks(g.c * g.h * g.w))
        .for_each_init(
            || {
                if pointwise {
                    Vec::new()
                } else {
                    vec![T::zero(); k * p]
                }
            },
            |cols, (o, x)| {
                let cols: &[T] = if pointwise {
                    x
                } else {
                    im2col(x, &g, cols);
                    cols
                };
                gemm(
                    MatRef::new(weight.data(), cout, k),
                    MatRef::new(cols, k, p),
                    T::zero(),
                    o,
                );
                if let Some(b) = bias {
                    for (row, &bv) in o.chunks_mut(p).zip(b.data()) {
                        row.iter_mut().for_each(|v| *v += bv);
                    }
                }
            },
        );
    Tensor::from_vec(vec![n, cout, g.oh, g.ow], out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

/// Gradients of `conv2d` given the upstream gradient of its output.
/// Per-image weight gradients are reduced in batch order, so the result does
/// not depend on the thread count.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    let dummy_bias = spec.has_bias.then(|| Tensor::zeros(&[spec.out_channels]));
    let g = check_operands(input, weight, dummy_bias.as_ref(), spec)?;
    let [n, ..] = input.dims4()?;
    let cout = spec.out_channels;
    let (k, p) = (g.rows(), g.cols());
    if grad_out.shape() != [n, cout, g.oh, g.ow] {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            left: vec![n, cout, g.oh, g.ow],
            right: grad_out.shape().to_vec(),
        });
    }
    let pointwise = spec.is_pointwise();
    let in_len = g.c * g.h * g.w;
    let mut grad_in = if need_input {
        vec![T::zero(); n * in_len]
    } else {
        Vec::new()
    };

    let per_image = |x: &[T], dy: &[T], dx: Option<&mut [T]>| -> Vec<T> {
        let mut cols_buf;
        let cols: &[T] = if pointwise {
            x
        } else {
            cols_buf = vec![T::zero(); k * p];
            im2col(x, &g, &mut cols_buf);
            &cols_buf
        };
        let mut dw = vec![T::zero(); cout * k];
        gemm(
            MatRef::new(dy, cout, p),
            MatRef::t(cols, k, p),
            T::zero(),
            &mut dw,
        );
        if let Some(dx) = dx {
            let wt = MatRef::t(weight.data(), cout, k);
            if pointwise {
                gemm(wt, MatRef::new(dy, cout, p), T::zero(), dx);
            } else {
                let mut dcols = vec![T::zero(); k * p];
                gemm(wt, MatRef::new(dy, cout, p), T::zero(), &mut dcols);
                col2im(&dcols, &g, dx);
            }
        }
        dw
    };

    let xs = input.data().par_chunks(in_len);
    let dys = grad_out.data().par_chunks(cout * p);
    let partial: Vec<Vec<T>> = if need_input {
        xs.zip(dys)
            .zip(grad_in.par_chunks_mut(in_len))
            .map(|((x, dy), dx)| per_image(x, dy, Some(dx)))
            .collect()
    } else {
        xs.zip(dys).map(|(x, dy)| per_image(x, dy, None)).collect()
    };

    let mut dw = vec![T::zero(); cout * k];
    for part in &partial {
        dw.iter_mut().zip(part).for_each(|(a, &b)| *a += b);
    }
    let bias = spec.has_bias.then(|| {
        let mut db = vec![T::zero(); cout];
        for img in grad_out.data().chunks(cout * p) {
            for (acc, row) in db.iter_mut().zip(img.chunks(p)) {
                *acc += row.iter().copied().sum::<T>();
            }
        }
        Tensor::from_vec(vec![cout], db).expect("bias shape")
    });
    Ok(ConvGrads {
        input: if need_input {
            Some(Tensor::from_vec(input.shape().to_vec(), grad_in)?)
        } else {
            None
        },
        weight: Tensor::from_vec(spec.weight_shape().to_vec(), dw)?,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct seven-loop reference, independent of im2col.
    fn naive_conv(
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        b: Option<&Tensor<f64>>,
        s: &ConvSpec,
    ) -> Tensor<f64> {
        let [n, c, h, wd] = x.dims4().unwrap();
        let (oh, ow) = s.output_hw(h, wd).unwrap();
        let co = s.out_channels;
        let (kh, kw) = s.kernel;
        let mut out = Tensor::zeros(&[n, co, oh, ow]);
        for b_ in 0..n {
            for o in 0..co {
                for y in 0..oh {
                    for xo in 0..ow {
                        let mut acc = b.map_or(0.0, |b| b.data()[o]);
                        for ci in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let iy = (y * s.stride.0 + i * s.dilation.0) as isize
                                        - s.padding.0 as isize;
                                    let ix = (xo * s.stride.1 + j * s.dilation.1) as isize
                                        - s.padding.1 as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()
                                        [((b_ * c + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((o * c + ci) * kh + i) * kw + j];
                                }
                            }
                        }
                        out.data_mut()[((b_ * co + o) * oh + y) * ow + xo] = acc;
                    }
                }
            }
        }
        out
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::<f32>::from_fn(&[1, 1, 4, 4], |i| i as f32 * 0.25 - 1.0);
        let w = Tensor::ones(&[1, 1, 1, 1]);
        let y = conv2d(&x, &w, None, &ConvSpec::new(1, 1, 1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dilated_output_extent() {
        let spec = ConvSpec::new(1, 1, 3).dilation(2);
        assert_eq!(spec.output_hw(8, 8).unwrap(), (4, 4));
        assert_eq!(spec.effective_kernel(), (5, 5));
        assert!(matches!(
            spec.output_hw(4, 4),
            Err(Error::EmptyOutput { .. })
        ));
    }

    #[test]
    fn all_ones_window_overlap() {
        // Overlap of a 3×3 window with a 5×5 image under padding 1:
        // interior positions see 9 cells, corners see 2·2 = 4.
        let x = Tensor::<f32>::ones(&[1, 1, 5, 5]);
        let w = Tensor::ones(&[1, 1, 3, 3]);
        let y = conv2d(&x, &w, None, &ConvSpec::new(1, 1, 3).padding(1)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 5, 5]);
        assert_eq!(y.data()[12], 9.0);
        assert_eq!(y.data()[0], 4.0);
        assert_eq!(y.data()[2], 6.0);
    }

    #[test]
    fn rejects_mismatched_operands() {
        let x = Tensor::<f32>::ones(&[1, 2, 5, 5]);
        let w = Tensor::ones(&[1, 3, 3, 3]);
        let err = conv2d(&x, &w, None, &ConvSpec::new(2, 1, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("[1, 2, 5, 5]") && msg.contains("[1, 3, 3, 3]"),
            "{msg}"
        );

        let w = Tensor::ones(&[1, 2, 7, 7]);
        assert!(matches!(
            conv2d(&x, &w, None, &ConvSpec::new(2, 1, 7)),
            Err(Error::EmptyOutput { .. })
        ));
        let w = Tensor::ones(&[1, 2, 3, 3]);
        assert!(conv2d(&x, &w, None, &ConvSpec::new(2, 1, 3).bias(true)).is_err());
    }

    #[test]
    fn matches_naive_reference_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in [1, 2, 3, 5] {
            for s in [1, 2, 3] {
                for p in [0, 1, 2] {
                    for d in [1, 2, 3] {
                        let spec = ConvSpec::new(3, 2, k)
                            .stride(s)
                            .padding(p)
                            .dilation(d)
                            .bias(true);
                        let Ok((oh, ow)) = spec.output_hw(7, 6) else {
                            continue;
                        };
                        let x = random(&[2, 3, 7, 6], &mut rng);
                        let w = random(&spec.weight_shape(), &mut rng);
                        let b = random(&[2], &mut rng);
                        let y = conv2d(&x, &w, Some(&b), &spec).unwrap();
                        assert_eq!(y.shape(), &[2, 2, oh, ow]);
                        let r = naive_conv(&x, &w, Some(&b), &spec);
                        assert!(y.max_abs_diff(&r).unwrap() < 1e-12, "k{k} s{s} p{p} d{d}");
                    }
                }
            }
        }
    }

    /// Adjoint identity ⟨conv(x), dy⟩ = ⟨x, dx⟩ + ⟨w, dw⟩ split by linearity.
    #[test]
    fn backward_is_adjoint_of_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (k, s, p, d) in [
            (3, 1, 1, 1),
            (3, 2, 1, 1),
            (3, 1, 2, 2),
            (1, 2, 0, 1),
            (1, 1, 0, 1),
        ] {
            let spec = ConvSpec::new(2, 3, k).stride(s).padding(p).dilation(d);
            let x = random(&[2, 2, 6, 6], &mut rng);
            let w = random(&spec.weight_shape(), &mut rng);
            let y = conv2d(&x, &w, None, &spec).unwrap();
            let dy = random(y.shape(), &mut rng);
            let g = conv2d_backward(&x, &w, &spec, &dy, true).unwrap();
            let dot = |a: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
                a.data().iter().zip(b.data()).map(|(a, b)| a * b).sum()
            };
            let lhs = dot(&y, &dy);
            assert!((lhs - dot(&x, g.input.as_ref().unwrap())).abs() < 1e-10);
            assert!((lhs - dot(&w, &g.weight)).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn output_shape_follows_floor_rule(
            h in 1usize..20, w in 1usize..20, k in 1usize..6,
            s in 1usize..4, p in 0usize..3, d in 1usize..4,
        ) {
            let spec = ConvSpec::new(1, 1, k).stride(s).padding(p).dilation(d);
            let x = Tensor::<f32>::ones(&[1, 1, h, w]);
            let wt = Tensor::ones(&[1, 1, k, k]);
            let span_h = (h + 2 * p) as isize - (d * (k - 1)) as isize - 1;
            let span_w = (w + 2 * p) as isize - (d * (k - 1)) as isize - 1;
            match conv2d(&x, &wt, None, &spec) {
                Ok(y) => {
                    prop_assert!(span_h >= 0 && span_w >= 0);
                    prop_assert_eq!(y.shape(), &[1, 1, span_h as usize / s + 1, span_w as usize / s + 1]);
                }
                Err(_) => prop_assert!(span_h < 0 || span_w < 0),
            }
        }

        #[test]
        fn centered_one_hot_is_identity(c in 1usize..4, h in 1usize..8, w in 1usize..8, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::<f32>::from_fn(&[2, c, h, w], |_| rng.random_range(-3.0..3.0));
            let eye = Tensor::from_fn(&[c, c, 1, 1], |i| if i / c == i % c { 1.0 } else { 0.0 });
            let y = conv2d(&x, &eye, None, &ConvSpec::new(c, c, 1)).unwrap();
            prop_assert_eq!(y, x);
        }

        #[test]
        fn dilation_equals_zero_inflated_kernel(
            k in 1usize..4, d in 1usize..4, s in 1usize..3, seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ke = d * (k - 1) + 1;
            let h = ke + 3;
            let x = Tensor::<f32>::from_fn(&[1, 2, h, h + 1], |_| rng.random_range(-1.0..1.0));
            let w = Tensor::<f32>::from_fn(&[2, 2, k, k], |_| rng.random_range(-1.0..1.0));
            let mut inflated = Tensor::<f32>::zeros(&[2, 2, ke, ke]);
            for oc in 0..2 {
                for ic in 0..2 {
                    for i in 0..k {
                        for j in 0..k {
                            inflated.data_mut()[((oc * 2 + ic) * ke + i * d) * ke + j * d] =
                                w.data()[((oc * 2 + ic) * k + i) * k + j];
                        }
                    }
                }
            }
            let a = conv2d(&x, &w, None, &ConvSpec::new(2, 2, k).dilation(d).stride(s).padding(1)).unwrap();
            let b = conv2d(&x, &inflated, None, &ConvSpec::new(2, 2, ke).stride(s).padding(1)).unwrap();
            prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-5);
        }
    }
}
