use alloc::vec::Vec;

use rand::Rng as _;

use super::Sample;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Reflect padding added on every side before the random crop.
pub const AUGMENT_PAD: usize = 4;

/// One draw of the augmentation stream. The crop window starts at `(dy, dx)`
/// in the padded image; `(AUGMENT_PAD, AUGMENT_PAD)` is the unshifted crop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentDecision {
    pub flip: bool,
    pub dx: usize,
    pub dy: usize,
}

/// Draws flip (p = 0.5), then `dx`, then `dy`, each uniform in
/// `0..=2·AUGMENT_PAD`.
pub fn draw_augment(rng: &mut Rng) -> AugmentDecision {
    let flip = rng.random_bool(0.5);
    let dx = rng.random_range(0..=2 * AUGMENT_PAD);
    let dy = rng.random_range(0..=2 * AUGMENT_PAD);
    AugmentDecision { flip, dx, dy }
}

/// Mirror index without repeating the edge (`-1 → 1`, `n → n − 2`).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Optional horizontal flip, then a reflect-padded crop of `image: [C, H, W]`.
pub fn apply_augment(image: &Tensor<f32>, d: AugmentDecision) -> Tensor<f32> {
    let sh = image.shape();
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    let src = image.data();
    let pad = AUGMENT_PAD as isize;
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            let sy = reflect(y as isize + d.dy as isize - pad, h);
            for x in 0..w {
                let mut sx = reflect(x as isize + d.dx as isize - pad, w);
                if d.flip {
                    sx = w - 1 - sx;
                }
                out.push(plane[sy * w + sx]);
            }
        }
    }
    Tensor::new(sh, out).expect("shape preserved")
}

/// Training-time augmentation; label and id are kept.
pub fn augment(sample: &Sample, rng: &mut Rng) -> Sample {
    let d = draw_augment(rng);
    Sample {
        image: apply_augment(sample.image(), d),
        label: sample.label,
        id: sample.id.clone(),
    }
}
