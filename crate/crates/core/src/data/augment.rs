use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::tensor::Tensor;

/// Candidate rescale factors; the result is cropped or zero-padded back to
/// the original extent so batch shapes stay fixed.
pub const SCALES: [f64; 3] = [0.75, 1.0, 1.25];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub hflip: bool,
    pub vflip: bool,
    pub scale: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        hflip: false,
        vflip: false,
        scale: 1.0,
    };

    pub fn draw(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AugmentParams {
            hflip: rng.random_bool(0.5),
            vflip: rng.random_bool(0.5),
            scale: SCALES[rng.random_range(0..SCALES.len())],
        }
    }

    /// Applies the same spatial transform to image and mask.
    pub fn apply(&self, sample: &Sample) -> Sample {
        let mut image = sample.image.clone();
        let mut mask = sample.mask.clone();
        if self.hflip {
            image = flip_horizontal(&image);
            mask = flip_horizontal(&mask);
        }
        if self.vflip {
            image = flip_vertical(&image);
            mask = flip_vertical(&mask);
        }
        if self.scale != 1.0 {
            image = rescale_to_original(&image, self.scale, false);
            mask = rescale_to_original(&mask, self.scale, true);
        }
        Sample {
            id: sample.id.clone(),
            image,
            mask,
        }
    }
}

/// Random flips and rescale, deterministic in `seed`.
pub fn augment(sample: &Sample, seed: u64) -> Sample {
    AugmentParams::draw(seed).apply(sample)
}

fn chw(t: &Tensor<f32>) -> (usize, usize, usize) {
    (t.shape()[0], t.shape()[1], t.shape()[2])
}

pub fn flip_horizontal(t: &Tensor<f32>) -> Tensor<f32> {
    let w = t.shape()[2];
    let d = t.data();
    Tensor::from_fn(t.shape(), |i| {
        let (row, x) = (i / w, i % w);
        d[row * w + (w - 1 - x)]
    })
}

pub fn flip_vertical(t: &Tensor<f32>) -> Tensor<f32> {
    let (_, h, w) = chw(t);
    let d = t.data();
    Tensor::from_fn(t.shape(), |i| {
        let (c, y, x) = (i / (h * w), (i / w) % h, i % w);
        d[c * h * w + (h - 1 - y) * w + x]
    })
}

/// Resamples a C×H×W tensor by `scale` (pixel-center aligned; bilinear, or
/// nearest for masks) and center-crops or zero-pads back to H×W.
pub fn rescale_to_original(t: &Tensor<f32>, scale: f64, nearest: bool) -> Tensor<f32> {
    let (c, h, w) = chw(t);
    let nh = ((h as f64 * scale).round() as usize).max(1);
    let nw = ((w as f64 * scale).round() as usize).max(1);
    let d = t.data();
    let src = |n: usize, size: usize, i: usize| (i as f64 + 0.5) * size as f64 / n as f64 - 0.5;
    let sample = |ch: usize, sy: f64, sx: f64| -> f32 {
        let plane = &d[ch * h * w..(ch + 1) * h * w];
        if nearest {
            let y = (sy + 0.5).floor().clamp(0.0, (h - 1) as f64) as usize;
            let x = (sx + 0.5).floor().clamp(0.0, (w - 1) as f64) as usize;
            return plane[y * w + x];
        }
        let sy = sy.clamp(0.0, (h - 1) as f64);
        let sx = sx.clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = ((sy - y0 as f64) as f32, (sx - x0 as f64) as f32);
        let top = plane[y0 * w + x0] + fx * (plane[y0 * w + x1] - plane[y0 * w + x0]);
        let bot = plane[y1 * w + x0] + fx * (plane[y1 * w + x1] - plane[y1 * w + x0]);
        top + fy * (bot - top)
    };
    // offset of the original frame inside the rescaled one (negative → padding)
    let oy = (nh as isize - h as isize) / 2;
    let ox = (nw as isize - w as isize) / 2;
    Tensor::from_fn(&[c, h, w], |i| {
        let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
        let (ry, rx) = (y as isize + oy, x as isize + ox);
        if ry < 0 || rx < 0 || ry >= nh as isize || rx >= nw as isize {
            return 0.0;
        }
        sample(ch, src(nh, h, ry as usize), src(nw, w, rx as usize))
    })
}
