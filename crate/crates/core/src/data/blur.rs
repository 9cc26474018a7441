use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::augment::reflect;
use crate::error::DataError;
use crate::tensor::Tensor;

/// Normalized 1-D Gaussian weights for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, DataError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DataError::Parameter(format!("blur sigma must be positive, got {sigma}")));
    }
    let r = libm::ceil(3.0 * sigma) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Separable Gaussian blur over the last two axes of `[.., H, W]`, reflect
/// padding, output clamped to `[0, 1]`.
pub fn gaussian_blur(image: &Tensor<f32>, sigma: f64) -> Result<Tensor<f32>, DataError> {
    let kernel = gaussian_kernel(sigma)?;
    let sh = image.shape();
    if sh.len() < 2 {
        return Err(DataError::SampleShape {
            got: sh.to_vec(),
            expected: vec![0, 0],
        });
    }
    let (h, w) = (sh[sh.len() - 2], sh[sh.len() - 1]);
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0f64; h * w];
    let mut out = Vec::with_capacity(image.numel());
    for plane in image.data().chunks_exact(h * w) {
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &wt)| wt * plane[y * w + reflect(x as isize + k as isize - r, w)] as f64)
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &wt)| wt * tmp[reflect(y as isize + k as isize - r, h) * w + x])
                    .sum();
                out.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(Tensor::new(sh, out)?)
}
