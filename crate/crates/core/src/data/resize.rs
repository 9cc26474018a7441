use alloc::vec::Vec;

use crate::error::DataError;
use crate::tensor::Tensor;

/// Bilinear resize of `[C, H, W]` using half-pixel centres: output pixel `o`
/// samples source coordinate `(o + 0.5)·in/out − 0.5`, clamped to the image.
pub fn resize_bilinear(image: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>, DataError> {
    let sh = image.shape();
    if sh.len() != 3 || out_h == 0 || out_w == 0 {
        return Err(DataError::Parameter(alloc::format!(
            "cannot resize {sh:?} to {out_h}×{out_w}"
        )));
    }
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = libm::floor(s) as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = taps(out_h, h);
    let xs = taps(out_w, w);
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for plane in image.data().chunks_exact(h * w) {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let p = |y: usize, x: usize| plane[y * w + x] as f64;
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    Ok(Tensor::new(&[c, out_h, out_w], out)?)
}
