use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::nn::INPUT_MULTIPLE;
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthStyle {
    /// Filled ellipses of dense, purple-stained tissue.
    Blobs,
    /// Tubule-like structures: a stained annular wall around a pale lumen.
    /// The mask marks the whole structure (wall and lumen).
    Rings,
}

impl std::str::FromStr for SynthStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(SynthStyle::Blobs),
            "rings" => Ok(SynthStyle::Rings),
            other => Err(Error::invalid(
                "SynthStyle",
                format!("unknown style `{other}` (blobs | rings)"),
            )),
        }
    }
}

const FG_MIN: f64 = 0.05;
const FG_MAX: f64 = 0.6;

const BACKGROUND: [f32; 3] = [0.75, 0.55, 0.8];
const WALL: [f32; 3] = [0.45, 0.2, 0.55];
const LUMEN: [f32; 3] = [0.95, 0.93, 0.95];

#[derive(Clone, Copy, PartialEq)]
enum Region {
    Background,
    Wall,
    Lumen,
}

/// `n` seeded image/mask pairs of `size`×`size` pixels. Each sample is drawn
/// from its own sub-seed, so sample `i` does not depend on `n`.
pub fn synth_dataset(n: usize, size: usize, seed: u64, style: SynthStyle) -> Result<Vec<Sample>> {
    if size == 0 || !size.is_multiple_of(INPUT_MULTIPLE) {
        return Err(Error::invalid(
            "synth_dataset",
            format!("size {size} is not a positive multiple of {INPUT_MULTIPLE}"),
        ));
    }
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(seed, "synth", i as u64));
            let regions = loop {
                let r = match style {
                    SynthStyle::Blobs => blobs(size, &mut rng),
                    SynthStyle::Rings => rings(size, &mut rng),
                };
                let fg = r.iter().filter(|&&r| r != Region::Background).count() as f64
                    / (size * size) as f64;
                if (FG_MIN..=FG_MAX).contains(&fg) {
                    break r;
                }
            };
            render(format!("synth_{i:04}"), size, &regions, &mut rng)
        })
        .collect()
}

fn centers(size: usize) -> impl Iterator<Item = (usize, f64, f64)> {
    (0..size * size).map(move |p| (p, (p % size) as f64 + 0.5, (p / size) as f64 + 0.5))
}

fn rings(size: usize, rng: &mut ChaCha8Rng) -> Vec<Region> {
    let mut out = vec![Region::Background; size * size];
    let span = size.min(96) as f64;
    for _ in 0..1 + size / 128 {
        let ro = rng.random_range(0.25..0.4) * span;
        let ri = ro * rng.random_range(0.45..0.7);
        let cx = rng.random_range(ro..size as f64 - ro);
        let cy = rng.random_range(ro..size as f64 - ro);
        for (p, x, y) in centers(size) {
            let d = (x - cx).hypot(y - cy);
            if d <= ri {
                out[p] = Region::Lumen;
            } else if d <= ro {
                out[p] = Region::Wall;
            }
        }
    }
    out
}

fn blobs(size: usize, rng: &mut ChaCha8Rng) -> Vec<Region> {
    let mut out = vec![Region::Background; size * size];
    let s = size as f64;
    for _ in 0..rng.random_range(1..=3) {
        let a = rng.random_range(0.12..0.3) * s;
        let b = rng.random_range(0.12..0.3) * s;
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (cx, cy) = (
            rng.random_range(0.2..0.8) * s,
            rng.random_range(0.2..0.8) * s,
        );
        let (sin, cos) = theta.sin_cos();
        for (p, x, y) in centers(size) {
            let (dx, dy) = (x - cx, y - cy);
            let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
            if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                out[p] = Region::Wall;
            }
        }
    }
    out
}

fn render(id: String, size: usize, regions: &[Region], rng: &mut ChaCha8Rng) -> Result<Sample> {
    let hw = size * size;
    let noise: Vec<f32> = (0..3 * hw).map(|_| rng.random::<f32>()).collect();
    let image = Tensor::from_fn(&[3, size, size], |i| {
        let (c, p) = (i / hw, i % hw);
        let n = noise[i];
        let v = match regions[p] {
            Region::Background => BACKGROUND[c] * (0.8 + 0.2 * n),
            Region::Wall => WALL[c] + 0.15 * n,
            Region::Lumen => LUMEN[c] - 0.05 * n,
        };
        v.clamp(0.0, 1.0)
    });
    let mask = Tensor::from_fn(&[1, size, size], |p| {
        (regions[p] != Region::Background) as u8 as f32
    });
    Sample::new(id, image, mask)
}
