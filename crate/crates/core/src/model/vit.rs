use alloc::format;
use alloc::vec::Vec;

use super::params::{Bound, Declarer};
use super::spec::{ClassifierSpec, VitConfig};
use crate::autodiff::{Graph, Var};
use crate::error::ModelError;
use crate::scalar::Real;

pub(crate) fn declare<T: Real>(d: &mut Declarer<T>, spec: &ClassifierSpec, cfg: &VitConfig) {
    let dim = cfg.embed_dim;
    let patch_len = spec.channels * cfg.patch_size * cfg.patch_size;
    let tokens = sequence_length(spec, cfg);
    d.linear("patch_embed", patch_len, dim);
    d.trunc_normal("cls_token".into(), &[1, dim]);
    d.trunc_normal("pos_embed".into(), &[tokens, dim]);
    for i in 0..cfg.depth {
        d.layer_norm(&format!("blocks.{i}.ln1"), dim);
        for proj in ["q", "k", "v", "o"] {
            d.linear(&format!("blocks.{i}.attn.{proj}"), dim, dim);
        }
        d.layer_norm(&format!("blocks.{i}.ln2"), dim);
        d.linear(&format!("blocks.{i}.mlp.fc1"), dim, dim * cfg.mlp_ratio);
        d.linear(&format!("blocks.{i}.mlp.fc2"), dim * cfg.mlp_ratio, dim);
    }
    d.layer_norm("norm", dim);
    d.linear("head", dim, spec.classes);
}

/// Patch tokens plus the class token.
pub fn sequence_length(spec: &ClassifierSpec, cfg: &VitConfig) -> usize {
    let grid = spec.resolution / cfg.patch_size;
    grid * grid + 1
}

/// `[N, C, H, W]` → `[N, grid², C·p·p]`, patches in row-major grid order,
/// each flattened channel-major.
pub(crate) fn patchify<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    channels: usize,
    resolution: usize,
    patch: usize,
) -> Result<Var, ModelError> {
    let n = g.shape(x)[0];
    let grid = resolution / patch;
    let x = g.reshape(x, &[n, channels, grid, patch, grid, patch])?;
    let x = g.permute(x, &[0, 2, 4, 1, 3, 5])?;
    Ok(g.reshape(x, &[n, grid * grid, channels * patch * patch])?)
}

/// Multi-head self-attention over `x: [N, S, D]` using the `{prefix}.q/k/v/o`
/// projections.
pub(crate) fn self_attention<T: Real>(
    g: &mut Graph<T>,
    p: &Bound<'_, T>,
    x: Var,
    prefix: &str,
    heads: usize,
) -> Result<Var, ModelError> {
    let (n, s, dim) = {
        let sh = g.shape(x);
        (sh[0], sh[1], sh[2])
    };
    let head_dim = dim / heads;
    let split = |g: &mut Graph<T>, proj: &str| -> Result<Var, ModelError> {
        let y = p.linear(g, x, &format!("{prefix}.{proj}"))?;
        let y = g.reshape(y, &[n, s, heads, head_dim])?;
        Ok(g.permute(y, &[0, 2, 1, 3])?)
    };
    let q = split(g, "q")?;
    let k = split(g, "k")?;
    let v = split(g, "v")?;
    let scores = g.matmul_bt(q, k)?;
    let scores = g.scale(scores, T::from_f64(1.0 / libm::sqrt(head_dim as f64)))?;
    let attn = g.softmax(scores, 3)?;
    let ctx = g.matmul(attn, v)?;
    let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = g.reshape(ctx, &[n, s, dim])?;
    p.linear(g, ctx, &format!("{prefix}.o"))
}

pub(crate) fn logits<T: Real>(
    g: &mut Graph<T>,
    p: &Bound<'_, T>,
    spec: &ClassifierSpec,
    cfg: &VitConfig,
    x: Var,
) -> Result<Var, ModelError> {
    let n = g.shape(x)[0];
    let dim = cfg.embed_dim;
    let tokens = sequence_length(spec, cfg);
    let patches = patchify(g, x, spec.channels, spec.resolution, cfg.patch_size)?;
    let emb = p.linear(g, patches, "patch_embed")?;
    let cls = g.embedding_lookup(p.get("cls_token")?, &alloc::vec![0; n])?;
    let cls = g.reshape(cls, &[n, 1, dim])?;
    let mut h = g.concat(&[cls, emb], 1)?;
    h = g.add(h, p.get("pos_embed")?)?;
    for i in 0..cfg.depth {
        let a = p.layer_norm(g, h, &format!("blocks.{i}.ln1"))?;
        let a = self_attention(g, p, a, &format!("blocks.{i}.attn"), cfg.heads)?;
        h = g.add(h, a)?;
        let m = p.layer_norm(g, h, &format!("blocks.{i}.ln2"))?;
        let m = p.linear(g, m, &format!("blocks.{i}.mlp.fc1"))?;
        let m = g.gelu(m)?;
        let m = p.linear(g, m, &format!("blocks.{i}.mlp.fc2"))?;
        h = g.add(h, m)?;
    }
    let h = p.layer_norm(g, h, "norm")?;
    let flat = g.reshape(h, &[n * tokens, dim])?;
    let cls_rows: Vec<usize> = (0..n).map(|i| i * tokens).collect();
    let cls_out = g.embedding_lookup(flat, &cls_rows)?;
    p.linear(g, cls_out, "head")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamStore;
    use crate::tensor::Tensor;

    #[test]
    fn patchify_places_pixels() {
        // 1 sample, 2 channels, 4×4, patch 2: value encodes (c, y, x).
        let data: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(&[1, 2, 4, 4], data).unwrap());
        let p = patchify(&mut g, x, 2, 4, 2).unwrap();
        assert_eq!(g.shape(p), &[1, 4, 8]);
        let out = g.value(p).data();
        // patch (gy=1, gx=0) is token 2; its element (c=1, py=0, px=1)
        // comes from pixel (c=1, y=2, x=1).
        let token = 2;
        let elem = 4 + 1;
        assert_eq!(out[token * 8 + elem], (16 + 2 * 4 + 1) as f64);
    }

    #[test]
    fn single_head_attention_matches_direct_evaluation() {
        // 3 tokens, width 2, one head, hand-picked weights.
        let mut store = ParamStore::<f64>::new();
        let w = |v: [f64; 4]| Tensor::new(&[2, 2], v.to_vec()).unwrap();
        let b = |v: [f64; 2]| Tensor::new(&[2], v.to_vec()).unwrap();
        let wq = [0.5, -0.2, 0.1, 0.9];
        let wk = [-0.3, 0.8, 0.6, 0.2];
        let wv = [1.0, 0.4, -0.7, 0.3];
        let wo = [0.2, 0.0, 0.5, -1.1];
        let (bq, bk, bv, bo) = ([0.1, 0.0], [0.0, -0.2], [0.3, 0.3], [0.0, 0.05]);
        for (name, wt, bt) in [("q", wq, bq), ("k", wk, bk), ("v", wv, bv), ("o", wo, bo)] {
            store.insert(format!("a.{name}.weight"), w(wt)).unwrap();
            store.insert(format!("a.{name}.bias"), b(bt)).unwrap();
        }
        let x = [[0.2, -1.0], [1.5, 0.3], [-0.4, 0.7]];

        let mut g = Graph::<f64>::new();
        let xv = g.constant(Tensor::new(&[1, 3, 2], x.concat()).unwrap());
        let bound = store.bind(&mut g, false);
        let out = self_attention(&mut g, &bound, xv, "a", 1).unwrap();
        let got = g.value(out).data().to_vec();

        let proj = |x: [f64; 2], w: [f64; 4], b: [f64; 2]| {
            [x[0] * w[0] + x[1] * w[2] + b[0], x[0] * w[1] + x[1] * w[3] + b[1]]
        };
        let q: Vec<_> = x.iter().map(|&r| proj(r, wq, bq)).collect();
        let k: Vec<_> = x.iter().map(|&r| proj(r, wk, bk)).collect();
        let v: Vec<_> = x.iter().map(|&r| proj(r, wv, bv)).collect();
        for i in 0..3 {
            let s: Vec<f64> = (0..3)
                .map(|j| (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / 2f64.sqrt())
                .collect();
            let z: f64 = s.iter().map(|e| e.exp()).sum();
            let mut ctx = [0.0; 2];
            for j in 0..3 {
                let a = s[j].exp() / z;
                ctx[0] += a * v[j][0];
                ctx[1] += a * v[j][1];
            }
            let want = proj(ctx, wo, bo);
            for c in 0..2 {
                assert!((got[i * 2 + c] - want[c]).abs() < 1e-5, "token {i} ch {c}");
            }
        }
    }
}
