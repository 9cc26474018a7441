//! Adversarial example export: clean/adversarial PNG pairs plus a metrics
//! sidecar.
//!
//! PNG quantization may move a pixel by up to half a code (1/510) past the
//! L∞ ball, so the sidecar carries norms before and after quantization.

use std::path::{Path, PathBuf};

use advmark_core::attack::{AttackConfig, AttackResult};
use advmark_core::data::DatasetSplit;
use serde::{Deserialize, Serialize};

use crate::dataset::{encode_png, quantize_u8, sample_path};
use crate::error::{Error, Result};
use crate::json::{write_file, write_json};
use crate::report::round_sig;

pub const CLEAN_DIR: &str = "clean";
pub const ADV_DIR: &str = "adv";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMetrics {
    pub id: String,
    pub label: usize,
    pub clean_pred: usize,
    pub adv_pred: usize,
    pub success: bool,
    pub linf: f64,
    pub l2: f64,
    /// Absent when the images are identical.
    pub psnr: Option<f64>,
    pub linf_quantized: f64,
    pub l2_quantized: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSummary {
    pub samples: usize,
    pub mean_linf: f64,
    pub max_linf: f64,
    pub mean_l2: f64,
    pub max_linf_quantized: f64,
    pub success_rate: f64,
    /// Fraction of samples whose final loss exceeds the initial loss.
    pub loss_increase_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSidecar {
    pub model: String,
    pub eps: f64,
    pub alpha: f64,
    pub steps: usize,
    pub random_start: bool,
    pub targeted: bool,
    pub summary: MetricsSummary,
    pub samples: Vec<SampleMetrics>,
}

/// Norms of the difference of two images after 8-bit quantization.
fn quantized_norms(clean: &[f32], adv: &[f32]) -> (f64, f64) {
    let mut linf = 0.0f64;
    let mut sq = 0.0f64;
    for (&c, &a) in clean.iter().zip(adv) {
        let d = (quantize_u8(a) as f64 - quantize_u8(c) as f64) / 255.0;
        linf = linf.max(d.abs());
        sq += d * d;
    }
    (linf, sq.sqrt())
}

/// Writes `clean/` and `adv/` PNG trees (dataset layout) and the metrics
/// sidecar under `dir`. `results` are per batch in split order. Returns the
/// written paths relative to `dir`.
pub fn export_adversarial(
    dir: &Path,
    model_id: &str,
    split: &DatasetSplit,
    results: &[AttackResult<f32>],
    attack: &AttackConfig,
) -> Result<(MetricsSidecar, Vec<PathBuf>)> {
    let mut written = Vec::new();
    let mut samples = Vec::with_capacity(split.len());
    let mut index = 0;
    for r in results {
        let n = r.adversarial.shape()[0];
        for j in 0..n {
            let s = split
                .samples()
                .get(index)
                .ok_or_else(|| Error::Report("more attack results than samples".into()))?;
            let adv = r.adversarial.slice_outer(j, 1).expect("j < n");
            let adv = adv.reshape(s.image().shape()).expect("same element count");
            let rel = sample_path(split, s);
            for (sub, img) in [(CLEAN_DIR, s.image()), (ADV_DIR, &adv)] {
                let path = Path::new(sub).join(&rel);
                write_file(&dir.join(&path), &encode_png(img)?)?;
                written.push(path);
            }
            let (linf_q, l2_q) = quantized_norms(s.image().data(), adv.data());
            let m = r.metrics[j];
            let traj = &r.loss_trajectory[j];
            samples.push(SampleMetrics {
                id: s.id.clone(),
                label: s.label,
                clean_pred: r.clean_predictions[j],
                adv_pred: r.adversarial_predictions[j],
                success: r.success[j],
                linf: round_sig(m.linf),
                l2: round_sig(m.l2),
                psnr: m.psnr.is_finite().then(|| round_sig(m.psnr)),
                linf_quantized: round_sig(linf_q),
                l2_quantized: round_sig(l2_q),
                initial_loss: round_sig(traj[0]),
                final_loss: round_sig(*traj.last().expect("trajectory has steps + 1 entries")),
            });
            index += 1;
        }
    }
    if index != split.len() {
        return Err(Error::Report(format!("{index} attack results for {} samples", split.len())));
    }
    let n = samples.len() as f64;
    // (linf, l2, success, loss increased) at full precision.
    let all: Vec<(f64, f64, bool, bool)> = results
        .iter()
        .flat_map(|r| {
            r.metrics
                .iter()
                .zip(&r.success)
                .zip(&r.loss_trajectory)
                .map(|((m, &s), t)| (m.linf, m.l2, s, t.last() > t.first()))
        })
        .collect();
    let summary = MetricsSummary {
        samples: samples.len(),
        mean_linf: round_sig(all.iter().map(|a| a.0).sum::<f64>() / n),
        max_linf: round_sig(all.iter().map(|a| a.0).fold(0.0, f64::max)),
        mean_l2: round_sig(all.iter().map(|a| a.1).sum::<f64>() / n),
        max_linf_quantized: samples.iter().map(|s| s.linf_quantized).fold(0.0, f64::max),
        success_rate: round_sig(all.iter().filter(|a| a.2).count() as f64 / n),
        loss_increase_rate: round_sig(all.iter().filter(|a| a.3).count() as f64 / n),
    };
    let sidecar = MetricsSidecar {
        model: model_id.into(),
        eps: round_sig(attack.epsilon),
        alpha: round_sig(attack.alpha),
        steps: attack.steps,
        random_start: attack.random_start,
        targeted: attack.targeted,
        summary,
        samples,
    };
    write_json(&dir.join(METRICS_FILE), &sidecar)?;
    written.push(PathBuf::from(METRICS_FILE));
    Ok((sidecar, written))
}
