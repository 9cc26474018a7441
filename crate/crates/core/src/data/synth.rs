use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{DatasetSplit, Sample, SplitTag};
use crate::error::DataError;
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::tensor::Tensor;

pub const SYNTH_CLASSES: usize = 5;

/// Parameters of the synthetic benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SynthConfig {
    pub seed: u64,
    pub per_class: usize,
    pub resolution: usize,
    pub noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            per_class: 200,
            resolution: 32,
            noise_std: 0.05,
        }
    }
}

/// Fixed visual identity of one class.
struct ClassStyle {
    /// Blob centres as fractions of the side length.
    blobs: Vec<[f64; 2]>,
    blob_color: [f64; 3],
    background: [f64; 3],
    /// Texture cycles across the image and its direction.
    frequency: f64,
    angle: f64,
    texture_color: [f64; 3],
}

const BLOB_SIGMA: f64 = 0.07;
const BLOB_AMPLITUDE: f64 = 0.45;
const TEXTURE_AMPLITUDE: f64 = 0.12;
const JITTER: f64 = 0.04;

fn unit_color(rng: &mut Rng, lo: f64, hi: f64) -> [f64; 3] {
    [0, 1, 2].map(|_| lo + (hi - lo) * rng.random::<f64>())
}

fn class_style(seed: u64, class: usize) -> ClassStyle {
    let mut rng = rng_from_seed(derive_seed(seed, "synth-class", &[class as u64]));
    let mut blobs: Vec<[f64; 2]> = Vec::with_capacity(class + 1);
    // Rejection keeps blob centres apart so their count stays visible.
    while blobs.len() < class + 1 {
        let c = [0.18 + 0.64 * rng.random::<f64>(), 0.18 + 0.64 * rng.random::<f64>()];
        let far = blobs
            .iter()
            .all(|b| libm::hypot(b[0] - c[0], b[1] - c[1]) > 0.22);
        if far {
            blobs.push(c);
        }
    }
    ClassStyle {
        blobs,
        blob_color: unit_color(&mut rng, 0.3, 1.0),
        background: unit_color(&mut rng, 0.1, 0.35),
        frequency: 1.5 + 1.25 * class as f64,
        angle: core::f64::consts::PI * (class as f64 / SYNTH_CLASSES as f64 + 0.15 * rng.random::<f64>()),
        texture_color: unit_color(&mut rng, 0.4, 1.0),
    }
}

fn render(style: &ClassStyle, res: usize, noise_std: f64, rng: &mut Rng) -> Vec<f32> {
    let offsets: Vec<[f64; 2]> = style
        .blobs
        .iter()
        .map(|_| [JITTER * (2.0 * rng.random::<f64>() - 1.0), JITTER * (2.0 * rng.random::<f64>() - 1.0)])
        .collect();
    let phase = core::f64::consts::TAU * rng.random::<f64>();
    let gain = 0.85 + 0.3 * rng.random::<f64>();
    let noise = Normal::new(0.0, noise_std).expect("noise_std is finite and non-negative");
    let (sin_a, cos_a) = libm::sincos(style.angle);
    let inv_two_sigma2 = 1.0 / (2.0 * BLOB_SIGMA * BLOB_SIGMA);
    let mut out = Vec::with_capacity(3 * res * res);
    let plane = |c: usize, out: &mut Vec<f32>, rng: &mut Rng| {
        for yi in 0..res {
            let y = (yi as f64 + 0.5) / res as f64;
            for xi in 0..res {
                let x = (xi as f64 + 0.5) / res as f64;
                let mut blob = 0.0;
                for (b, o) in style.blobs.iter().zip(&offsets) {
                    let (dx, dy) = (x - b[0] - o[0], y - b[1] - o[1]);
                    blob += libm::exp(-(dx * dx + dy * dy) * inv_two_sigma2);
                }
                let wave = libm::sin(
                    core::f64::consts::TAU * style.frequency * (x * cos_a + y * sin_a) + phase,
                );
                let mut v = style.background[c]
                    + gain * BLOB_AMPLITUDE * style.blob_color[c] * blob.min(1.0)
                    + TEXTURE_AMPLITUDE * style.texture_color[c] * wave;
                if noise_std > 0.0 {
                    v += noise.sample(rng);
                }
                out.push(quantize(v));
            }
        }
    };
    for c in 0..3 {
        plane(c, &mut out, rng);
    }
    out
}

/// Clamps to `[0, 1]` and snaps to the 8-bit grid, so PNG export is lossless.
fn quantize(v: f64) -> f32 {
    (libm::round(v.clamp(0.0, 1.0) * 255.0) / 255.0) as f32
}

/// Deterministic 5-class RGB benchmark. Class `k` shows `k + 1` Gaussian blobs
/// at class-fixed positions (jittered per sample) over a class-specific
/// sinusoidal texture with random phase, plus Gaussian pixel noise.
///
/// Samples are ordered by class, then index; ids are `class{k}/{i:04}`, the
/// relative path the sample takes in an exported image directory.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<DatasetSplit, DataError> {
    if cfg.per_class == 0 {
        return Err(DataError::Parameter("per_class must be at least 1".into()));
    }
    if cfg.resolution == 0 {
        return Err(DataError::Parameter("resolution must be positive".into()));
    }
    if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite()) {
        return Err(DataError::Parameter(format!(
            "noise_std must be finite and non-negative, got {}",
            cfg.noise_std
        )));
    }
    let res = cfg.resolution;
    let mut samples = Vec::with_capacity(SYNTH_CLASSES * cfg.per_class);
    for class in 0..SYNTH_CLASSES {
        let style = class_style(cfg.seed, class);
        for i in 0..cfg.per_class {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, "synth-sample", &[class as u64, i as u64]));
            let pixels = render(&style, res, cfg.noise_std, &mut rng);
            let image = Tensor::new(&[3, res, res], pixels)?;
            samples.push(Sample::new(image, class, format!("class{class}/{i:04}"))?);
        }
    }
    let names: Vec<String> = (0..SYNTH_CLASSES).map(|k| format!("class{k}")).collect();
    DatasetSplit::new(samples, names, SplitTag::All)
}
