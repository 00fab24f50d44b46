//! Pixel-level precision, recall and F1, fold aggregation, and overlay
//! rendering of prediction errors.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            true_positive: self.true_positive + o.true_positive,
            false_positive: self.false_positive + o.false_positive,
            false_negative: self.false_negative + o.false_negative,
            true_negative: self.true_negative + o.true_negative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelClass {
    TruePositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

fn classify(pred: bool, gt: bool) -> PixelClass {
    match (pred, gt) {
        (true, true) => PixelClass::TruePositive,
        (true, false) => PixelClass::FalsePositive,
        (false, true) => PixelClass::FalseNegative,
        (false, false) => PixelClass::TrueNegative,
    }
}

fn check<T: Scalar>(op: &'static str, pred: &Tensor<T>, gt: &Tensor<T>) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: pred.shape().to_vec(),
            right: gt.shape().to_vec(),
        });
    }
    if gt.data().iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(Error::invalid(op, "ground truth must be binary"));
    }
    Ok(())
}

/// Per-pixel class with predictions binarized as `p ≥ threshold`.
pub fn pixel_classes<T: Scalar>(
    pred_prob: &Tensor<T>,
    gt: &Tensor<T>,
    threshold: f64,
) -> Result<Vec<PixelClass>> {
    check("pixel_classes", pred_prob, gt)?;
    let th = T::from_f64_lossy(threshold);
    Ok(pred_prob
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| classify(p >= th, g == T::one()))
        .collect())
}

pub fn confusion<T: Scalar>(
    pred_prob: &Tensor<T>,
    gt: &Tensor<T>,
    threshold: f64,
) -> Result<ConfusionCounts> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(
            "confusion",
            format!("threshold {threshold} outside (0, 1)"),
        ));
    }
    let mut c = ConfusionCounts::default();
    for class in pixel_classes(pred_prob, gt, threshold)? {
        match class {
            PixelClass::TruePositive => c.true_positive += 1,
            PixelClass::FalsePositive => c.false_positive += 1,
            PixelClass::FalseNegative => c.false_negative += 1,
            PixelClass::TrueNegative => c.true_negative += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and their harmonic mean; each ratio is 0 when its
/// denominator is 0.
pub fn prf1(c: &ConfusionCounts) -> Scores {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.true_positive, c.true_positive + c.false_positive);
    let recall = ratio(c.true_positive, c.true_positive + c.false_negative);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_f1: f64,
    pub std_f1: f64,
}

/// Mean and population standard deviation of fold-level F1 values.
pub fn aggregate(fold_f1: &[f64]) -> Result<Aggregate> {
    if fold_f1.is_empty() {
        return Err(Error::invalid("aggregate", "no folds given"));
    }
    let n = fold_f1.len() as f64;
    let mean = fold_f1.iter().sum::<f64>() / n;
    let var = fold_f1.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n;
    Ok(Aggregate {
        mean_f1: mean,
        std_f1: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub images: Vec<ImageRecord>,
    /// Mean of the per-image F1 scores.
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub folds: Vec<FoldRecord>,
    pub aggregate: Aggregate,
}

impl FoldRecord {
    pub fn new(fold: usize, images: Vec<ImageRecord>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::invalid(
                "FoldRecord",
                format!("fold {fold} has no images"),
            ));
        }
        let f1 = images.iter().map(|r| r.scores.f1).sum::<f64>() / images.len() as f64;
        Ok(FoldRecord { fold, images, f1 })
    }
}

impl EvalReport {
    pub fn new(threshold: f64, folds: Vec<FoldRecord>) -> Result<Self> {
        let f1s: Vec<f64> = folds.iter().map(|f| f.f1).collect();
        let aggregate = aggregate(&f1s)?;
        Ok(EvalReport {
            threshold,
            folds,
            aggregate,
        })
    }
}

/// Scores one image against its ground truth.
pub fn evaluate_image<T: Scalar>(
    id: &str,
    pred_prob: &Tensor<T>,
    gt: &Tensor<T>,
    threshold: f64,
) -> Result<ImageRecord> {
    let counts = confusion(pred_prob, gt, threshold)?;
    Ok(ImageRecord {
        id: id.to_string(),
        counts,
        scores: prf1(&counts),
    })
}

pub const OVERLAY_ALPHA: f32 = 0.5;

pub fn overlay_color(class: PixelClass) -> Option<[u8; 3]> {
    match class {
        PixelClass::TruePositive => Some([0, 255, 0]),
        PixelClass::FalsePositive => Some([255, 0, 0]),
        PixelClass::FalseNegative => Some([0, 0, 255]),
        PixelClass::TrueNegative => None,
    }
}

/// Blends green (true positive), red (false positive) and blue (false
/// negative) over a 3×H×W base image; true negatives keep the base colour.
pub fn render_overlay(
    pred: &Tensor<f32>,
    gt: &Tensor<f32>,
    base: &Tensor<f32>,
    threshold: f64,
) -> Result<RgbImage> {
    let (h, w) = match *base.shape() {
        [3, h, w] => (h, w),
        _ => {
            return Err(Error::InvalidShape {
                shape: base.shape().to_vec(),
                reason: "base must be 3×H×W".into(),
            })
        }
    };
    if pred.len() != h * w {
        return Err(Error::ShapeMismatch {
            op: "render_overlay",
            left: base.shape().to_vec(),
            right: pred.shape().to_vec(),
        });
    }
    let classes = pixel_classes(pred, gt, threshold)?;
    let b = base.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let p = y as usize * w + x as usize;
        let px = |c: usize| b[c * h * w + p].clamp(0.0, 1.0) * 255.0;
        let rgb = match overlay_color(classes[p]) {
            None => [px(0), px(1), px(2)],
            Some(tint) => {
                [0, 1, 2].map(|c| (1.0 - OVERLAY_ALPHA) * px(c) + OVERLAY_ALPHA * tint[c] as f32)
            }
        };
        Rgb(rgb.map(|v| v.round() as u8))
    }))
}

/// Inverse of the overlay blend for one pixel: which class produced `out`
/// from `base`. Used to audit rendered overlays.
pub fn classify_overlay_pixel(base: [u8; 3], out: [u8; 3]) -> PixelClass {
    let candidates = [
        PixelClass::TruePositive,
        PixelClass::FalsePositive,
        PixelClass::FalseNegative,
    ];
    if base == out {
        // a tint can coincide with the base only when the base already equals the tint colour
        return PixelClass::TrueNegative;
    }
    *candidates
        .iter()
        .min_by_key(|&&c| {
            let tint = overlay_color(c).unwrap();
            (0..3)
                .map(|i| {
                    let e = ((1.0 - OVERLAY_ALPHA) * base[i] as f32
                        + OVERLAY_ALPHA * tint[i] as f32)
                        .round() as i32;
                    (e - out[i] as i32).abs()
                })
                .sum::<i32>()
        })
        .unwrap()
}
