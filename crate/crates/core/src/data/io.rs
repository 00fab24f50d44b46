use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use super::Sample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::data(path, format!("cannot decode image: {e}")))
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// RGB image as a 3×H×W tensor scaled to [0, 1]. Grayscale files are
/// replicated across channels; alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let rgb = open(path)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.as_raw();
    Ok(Tensor::from_fn(&[3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        raw[p * 3 + c] as f32 / 255.0
    }))
}

/// Single-channel mask binarized at half intensity, as a 1×H×W tensor.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let img = open(path)?;
    if img.color().has_color() {
        return Err(Error::data(
            path,
            format!("mask must be single-channel, found {:?}", img.color()),
        ));
    }
    let gray = img.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray
        .as_raw()
        .iter()
        .map(|&v| if v >= 128 { 1.0 } else { 0.0 })
        .collect();
    Tensor::from_vec(vec![1, h, w], data)
}

/// Single-channel image scaled to [0, 1] without binarization, e.g. a
/// saved probability map.
pub fn load_gray(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let img = open(path)?;
    if img.color().has_color() {
        return Err(Error::data(
            path,
            format!("expected a single-channel image, found {:?}", img.color()),
        ));
    }
    let gray = img.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    Tensor::from_vec(
        vec![1, h, w],
        gray.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
    )
}

pub fn load_sample(
    id: impl Into<String>,
    image_path: impl AsRef<Path>,
    mask_path: impl AsRef<Path>,
) -> Result<Sample> {
    let image = load_image(&image_path)?;
    let mask = load_mask(&mask_path)?;
    if image.shape()[1..] != mask.shape()[1..] {
        return Err(Error::data(
            mask_path.as_ref(),
            format!(
                "mask is {}×{} but image {} is {}×{}",
                mask.shape()[2],
                mask.shape()[1],
                image_path.as_ref().display(),
                image.shape()[2],
                image.shape()[1]
            ),
        ));
    }
    Sample::new(id, image, mask)
}

fn hw(t: &Tensor<f32>, channels: usize, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [c, h, w] if c == channels => Ok((h, w)),
        [h, w] if channels == 1 => Ok((h, w)),
        _ => Err(Error::InvalidShape {
            shape: t.shape().to_vec(),
            reason: format!("{what} must be {channels}×H×W"),
        }),
    }
}

fn save(path: &Path, img: DynamicImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::data(path, other.to_string()),
        })
}

/// 8-bit PNG with 0 for background and 255 for foreground (values ≥ 0.5).
pub fn save_mask(path: impl AsRef<Path>, mask: &Tensor<f32>) -> Result<()> {
    let (h, w) = hw(mask, 1, "mask")?;
    let raw = mask
        .data()
        .iter()
        .map(|&v| if v >= 0.5 { 255 } else { 0 })
        .collect();
    let img = GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer matches extents");
    save(path.as_ref(), DynamicImage::ImageLuma8(img))
}

/// 8-bit RGB PNG of a 3×H×W tensor in [0, 1].
pub fn save_image(path: impl AsRef<Path>, image: &Tensor<f32>) -> Result<()> {
    let (h, w) = hw(image, 3, "image")?;
    let d = image.data();
    let raw = (0..h * w)
        .flat_map(|p| (0..3).map(move |c| to_u8(d[c * h * w + p])))
        .collect();
    save_rgb(
        path,
        RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches extents"),
    )
}

pub fn save_rgb(path: impl AsRef<Path>, image: RgbImage) -> Result<()> {
    save(path.as_ref(), DynamicImage::ImageRgb8(image))
}

/// One line of a dataset manifest; paths are resolved against the
/// manifest's directory when relative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
}

impl ManifestEntry {
    pub fn load(&self) -> Result<Sample> {
        load_sample(self.id.clone(), &self.image, &self.mask)
    }
}

/// Reads `id<TAB>image<TAB>mask` lines. Blank lines and `#` comments are skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, image, mask] = fields[..] else {
            return Err(Error::data(
                path,
                format!(
                    "line {}: expected 3 tab-separated fields, got {}",
                    n + 1,
                    fields.len()
                ),
            ));
        };
        if !seen.insert(id.to_string()) {
            return Err(Error::data(
                path,
                format!("line {}: duplicate id `{id}`", n + 1),
            ));
        }
        out.push(ManifestEntry {
            id: id.to_string(),
            image: base.join(image),
            mask: base.join(mask),
        });
    }
    Ok(out)
}

/// Writes entries with paths made relative to the manifest directory where possible.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
    let text: String = entries
        .iter()
        .map(|e| format!("{}\t{}\t{}\n", e.id, rel(&e.image), rel(&e.mask)))
        .collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
