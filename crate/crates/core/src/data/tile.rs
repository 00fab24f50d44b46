use super::Sample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn crop(t: &Tensor<f32>, y0: usize, x0: usize, size: usize) -> Tensor<f32> {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let d = t.data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for y in y0..y0 + size {
            let row = ch * h * w + y * w;
            out.extend_from_slice(&d[row + x0..row + x0 + size]);
        }
    }
    Tensor::from_vec(vec![c, size, size], out).expect("crop extents")
}

/// Non-overlapping square tiles in row-major order; tile ids carry their
/// grid position as `_r{row}_c{col}`.
pub fn tile(sample: &Sample, tile_size: usize) -> Result<Vec<Sample>> {
    let (h, w) = (sample.height(), sample.width());
    if tile_size == 0 || h % tile_size != 0 || w % tile_size != 0 {
        return Err(Error::invalid(
            "tile",
            format!("{h}×{w} is not divisible into {tile_size}×{tile_size} tiles"),
        ));
    }
    let mut out = Vec::new();
    for r in 0..h / tile_size {
        for c in 0..w / tile_size {
            let (y0, x0) = (r * tile_size, c * tile_size);
            out.push(Sample {
                id: format!("{}_r{r}_c{c}", sample.id),
                image: crop(&sample.image, y0, x0, tile_size),
                mask: crop(&sample.mask, y0, x0, tile_size),
            });
        }
    }
    Ok(out)
}

/// Inverse of [`tile`]: reassembles a `rows × cols` grid of equally sized
/// tiles given in row-major order.
pub fn stitch(id: impl Into<String>, tiles: &[Sample], rows: usize, cols: usize) -> Result<Sample> {
    if rows == 0 || cols == 0 || tiles.len() != rows * cols {
        return Err(Error::invalid(
            "stitch",
            format!("{} tiles do not form a {rows}×{cols} grid", tiles.len()),
        ));
    }
    let (th, tw) = (tiles[0].height(), tiles[0].width());
    if tiles.iter().any(|t| t.height() != th || t.width() != tw) {
        return Err(Error::invalid("stitch", "tiles differ in size"));
    }
    let join = |get: fn(&Sample) -> &Tensor<f32>| {
        let c = get(&tiles[0]).shape()[0];
        let (h, w) = (rows * th, cols * tw);
        let mut out = vec![0.0f32; c * h * w];
        for (i, t) in tiles.iter().enumerate() {
            let (y0, x0) = ((i / cols) * th, (i % cols) * tw);
            let d = get(t).data();
            for ch in 0..c {
                for y in 0..th {
                    let dst = ch * h * w + (y0 + y) * w + x0;
                    out[dst..dst + tw].copy_from_slice(&d[ch * th * tw + y * tw..][..tw]);
                }
            }
        }
        Tensor::from_vec(vec![c, h, w], out)
    };
    Ok(Sample {
        id: id.into(),
        image: join(|s| &s.image)?,
        mask: join(|s| &s.mask)?,
    })
}
