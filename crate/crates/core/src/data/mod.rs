//! Samples, PNG I/O, tiling, augmentation, cross-validation folds and a
//! synthetic tissue-like dataset.

mod augment;
mod folds;
mod io;
mod pad;
mod synth;
mod tile;

pub use augment::{
    augment, flip_horizontal, flip_vertical, rescale_to_original, AugmentParams, SCALES,
};
pub use folds::{kfold_split, FoldPlan};
pub use io::{
    load_gray, load_image, load_mask, load_sample, read_manifest, save_image, save_mask, save_rgb,
    write_manifest, ManifestEntry,
};
pub use pad::{crop_top_left, pad_reflect};
pub use synth::{synth_dataset, SynthStyle};
pub use tile::{stitch, tile};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// An RGB image (3×H×W, values in [0, 1]) with its binary mask (1×H×W).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor<f32>,
    pub mask: Tensor<f32>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Tensor<f32>, mask: Tensor<f32>) -> Result<Self> {
        let (ih, iw) = match image.shape() {
            &[3, h, w] => (h, w),
            s => {
                return Err(Error::InvalidShape {
                    shape: s.to_vec(),
                    reason: "image must be 3×H×W".into(),
                })
            }
        };
        match mask.shape() {
            &[1, h, w] if (h, w) == (ih, iw) => {}
            s => {
                return Err(Error::ShapeMismatch {
                    op: "Sample::new",
                    left: image.shape().to_vec(),
                    right: s.to_vec(),
                })
            }
        }
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("Sample::new", "mask values must be 0 or 1"));
        }
        Ok(Sample {
            id: id.into(),
            image,
            mask,
        })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }
}

/// Stacks images and masks of equally sized samples into N×3×H×W and
/// N×1×H×W batches.
pub fn collate<T: Scalar>(samples: &[&Sample]) -> Result<(Tensor<T>, Tensor<T>)> {
    let images: Vec<Tensor<T>> = samples.iter().map(|s| s.image.cast()).collect();
    let masks: Vec<Tensor<T>> = samples.iter().map(|s| s.mask.cast()).collect();
    let images: Vec<&Tensor<T>> = images.iter().collect();
    let masks: Vec<&Tensor<T>> = masks.iter().collect();
    Ok((Tensor::stack(&images)?, Tensor::stack(&masks)?))
}
