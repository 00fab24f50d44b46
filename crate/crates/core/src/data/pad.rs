use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn check_chw(op: &'static str, t: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] if h > 0 && w > 0 => Ok((c, h, w)),
        _ => Err(Error::invalid(
            op,
            format!("expected a non-empty C×H×W tensor, got {:?}", t.shape()),
        )),
    }
}

/// Reflect-pads a C×H×W tensor on the bottom and right so both extents
/// become multiples of `multiple`.
pub fn pad_reflect(t: &Tensor<f32>, multiple: usize) -> Result<Tensor<f32>> {
    let (c, h, w) = check_chw("pad_reflect", t)?;
    if multiple == 0 {
        return Err(Error::invalid("pad_reflect", "multiple must be positive"));
    }
    let (ph, pw) = (
        h.div_ceil(multiple) * multiple,
        w.div_ceil(multiple) * multiple,
    );
    let d = t.data();
    Ok(Tensor::from_fn(&[c, ph, pw], |i| {
        let (ch, y, x) = (i / (ph * pw), (i / pw) % ph, i % pw);
        d[ch * h * w + reflect(y, h) * w + reflect(x, w)]
    }))
}

/// Top-left `h × w` window of a C×H×W tensor.
pub fn crop_top_left(t: &Tensor<f32>, h: usize, w: usize) -> Result<Tensor<f32>> {
    let (c, th, tw) = check_chw("crop_top_left", t)?;
    if h > th || w > tw {
        return Err(Error::invalid(
            "crop_top_left",
            format!("{h}×{w} window exceeds {th}×{tw}"),
        ));
    }
    let d = t.data();
    Ok(Tensor::from_fn(&[c, h, w], |i| {
        let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
        d[ch * th * tw + y * tw + x]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_mirrors_without_edge_repeat() {
        let got: Vec<usize> = (0..9).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, [0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn pad_then_crop_is_identity() {
        let t = Tensor::from_fn(&[3, 5, 7], |i| i as f32);
        let p = pad_reflect(&t, 4).unwrap();
        assert_eq!(p.shape(), &[3, 8, 8]);
        // row 5 mirrors row 3, column 7 mirrors column 5
        assert_eq!(p.data()[5 * 8], t.data()[3 * 7]);
        assert_eq!(p.data()[7], t.data()[5]);
        assert_eq!(crop_top_left(&p, 5, 7).unwrap(), t);
    }

    #[test]
    fn aligned_input_is_unchanged() {
        let t = Tensor::from_fn(&[1, 32, 64], |i| i as f32);
        assert_eq!(pad_reflect(&t, 32).unwrap(), t);
    }
}
