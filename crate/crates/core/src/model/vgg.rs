use alloc::format;

use super::params::{Bound, Declarer};
use super::spec::{ClassifierSpec, VggConfig};
use crate::autodiff::{Graph, Var};
use crate::error::ModelError;
use crate::scalar::Real;

fn flat_features(spec: &ClassifierSpec, cfg: &VggConfig) -> usize {
    let side = spec.resolution >> cfg.widths.len();
    cfg.widths[cfg.widths.len() - 1] * side * side
}

pub(crate) fn declare<T: Real>(d: &mut Declarer<T>, spec: &ClassifierSpec, cfg: &VggConfig) {
    let mut in_ch = spec.channels;
    for (i, &width) in cfg.widths.iter().enumerate() {
        for j in 0..cfg.convs_per_block {
            d.conv(&format!("features.{i}.{j}"), width, in_ch, 3);
            in_ch = width;
        }
    }
    d.linear("fc1", flat_features(spec, cfg), cfg.hidden);
    d.linear("head", cfg.hidden, spec.classes);
}

pub(crate) fn logits<T: Real>(
    g: &mut Graph<T>,
    p: &Bound<'_, T>,
    spec: &ClassifierSpec,
    cfg: &VggConfig,
    x: Var,
) -> Result<Var, ModelError> {
    let mut h = x;
    for i in 0..cfg.widths.len() {
        for j in 0..cfg.convs_per_block {
            let y = p.conv(g, h, &format!("features.{i}.{j}"), 1, 1)?;
            h = g.relu(y)?;
        }
        h = g.max_pool2d(h, 2, 2)?;
    }
    let n = g.shape(h)[0];
    let flat = g.reshape(h, &[n, flat_features(spec, cfg)])?;
    let y = p.linear(g, flat, "fc1")?;
    let y = g.relu(y)?;
    p.linear(g, y, "head")
}
