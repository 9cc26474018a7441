use alloc::format;

use super::params::{Bound, Declarer};
use super::spec::{ClassifierSpec, ResnetConfig};
use crate::autodiff::{Graph, Var};
use crate::error::ModelError;
use crate::scalar::Real;

/// Stride of block `b` in stage `s`: the first block of every stage after the
/// first halves the resolution.
fn stride(stage: usize, block: usize) -> usize {
    if stage > 0 && block == 0 {
        2
    } else {
        1
    }
}

pub(crate) fn declare<T: Real>(d: &mut Declarer<T>, spec: &ClassifierSpec, cfg: &ResnetConfig) {
    d.conv("stem", cfg.widths[0], spec.channels, 3);
    let mut in_ch = cfg.widths[0];
    for (s, &width) in cfg.widths.iter().enumerate() {
        for b in 0..cfg.blocks_per_stage {
            let name = format!("stages.{s}.{b}");
            d.conv(&format!("{name}.conv1"), width, in_ch, 3);
            d.conv(&format!("{name}.conv2"), width, width, 3);
            if stride(s, b) != 1 || in_ch != width {
                d.conv(&format!("{name}.proj"), width, in_ch, 1);
            }
            in_ch = width;
        }
    }
    d.linear("head", in_ch, spec.classes);
}

pub(crate) fn logits<T: Real>(
    g: &mut Graph<T>,
    p: &Bound<'_, T>,
    cfg: &ResnetConfig,
    x: Var,
) -> Result<Var, ModelError> {
    let h = p.conv(g, x, "stem", 1, 1)?;
    let mut h = g.relu(h)?;
    for s in 0..cfg.widths.len() {
        for b in 0..cfg.blocks_per_stage {
            let name = format!("stages.{s}.{b}");
            let st = stride(s, b);
            let y = p.conv(g, h, &format!("{name}.conv1"), st, 1)?;
            let y = g.relu(y)?;
            let y = p.conv(g, y, &format!("{name}.conv2"), 1, 1)?;
            let shortcut = if p.get(&format!("{name}.proj.weight")).is_ok() {
                p.conv(g, h, &format!("{name}.proj"), st, 0)?
            } else {
                h
            };
            let y = g.add(y, shortcut)?;
            h = g.relu(y)?;
        }
    }
    let (n, c, hh, ww) = {
        let sh = g.shape(h);
        (sh[0], sh[1], sh[2], sh[3])
    };
    let flat = g.reshape(h, &[n, c, hh * ww])?;
    let pooled = g.mean(flat, 2)?;
    p.linear(g, pooled, "head")
}
