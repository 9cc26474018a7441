use alloc::vec;
use alloc::vec::Vec;

use super::{GradSink, Graph, Op, Var};
use crate::error::TensorError;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// `(outer, len, inner)` decomposition of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize), TensorError> {
    if axis >= shape.len() {
        return Err(TensorError::Axis {
            axis,
            ndim: shape.len(),
        });
    }
    Ok((
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    ))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`, computed
/// per row with max-subtraction. Shared by the graph op and by callers that
/// only need per-sample losses.
pub fn cross_entropy_rows<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(Vec<T>, Vec<T>), TensorError> {
    let sh = logits.shape();
    if sh.len() != 2 || sh[0] != labels.len() {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy",
            lhs: sh.to_vec(),
            rhs: vec![labels.len()],
        });
    }
    let (n, k) = (sh[0], sh[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(TensorError::Label {
            label: bad,
            classes: k,
        });
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut losses = Vec::with_capacity(n);
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let mx = row.iter().copied().fold(row[0], T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - mx).exp()).collect();
        let total: T = exps.iter().copied().sum();
        let log_z = total.ln() + mx;
        losses.push(log_z - row[label]);
        probs.extend(exps.iter().map(|&e| e / total));
    }
    Ok((losses, probs))
}

impl<T: Real> Graph<T> {
    /// Sum of all elements → shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let total: T = self.value(a).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum { a }, &[a])
    }

    /// Mean along `axis`; the axis is removed from the shape.
    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let sh = self.shape(a);
        let (outer, len, inner) = split_axis(sh, axis)?;
        let out_shape = reduced_shape(sh, axis);
        let x = self.value(a).data();
        let inv = T::ONE / T::from_usize(len);
        let mut out = vec![T::ZERO; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &x[(o * len + l) * inner..(o * len + l + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
        }
        out.iter_mut().for_each(|v| *v *= inv);
        let value = Tensor::new(&out_shape, out)?;
        self.push(
            "mean",
            value,
            Op::Mean {
                a,
                outer,
                len,
                inner,
            },
            &[a],
        )
    }

    /// Maximum along `axis` (first maximal element receives the gradient).
    pub fn max(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let sh = self.shape(a);
        let (outer, len, inner) = split_axis(sh, axis)?;
        let out_shape = reduced_shape(sh, axis);
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = o * len * inner + i;
                for l in 1..len {
                    let idx = (o * len + l) * inner + i;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
        let value = Tensor::new(&out_shape, out)?;
        self.push("max", value, Op::Max { a, argmax }, &[a])
    }

    /// Softmax along `axis`, stabilized by subtracting the slice maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let sh = self.shape(a);
        let (outer, len, inner) = split_axis(sh, axis)?;
        let x = self.value(a).data();
        let mut out = vec![T::ZERO; x.len()];
        if inner == 1 {
            for (src, dst) in x.chunks_exact(len).zip(out.chunks_exact_mut(len)) {
                let mx = src.iter().copied().fold(src[0], T::max);
                let mut total = T::ZERO;
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = (s - mx).exp();
                    total += *d;
                }
                let inv = T::ONE / total;
                dst.iter_mut().for_each(|d| *d *= inv);
            }
        } else {
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| (o * len + l) * inner + i;
                    let mx = (0..len).map(|l| x[at(l)]).fold(x[at(0)], T::max);
                    let mut total = T::ZERO;
                    for l in 0..len {
                        let e = (x[at(l)] - mx).exp();
                        out[at(l)] = e;
                        total += e;
                    }
                    for l in 0..len {
                        out[at(l)] /= total;
                    }
                }
            }
        }
        let value = Tensor::new(sh, out)?;
        self.push(
            "softmax",
            value,
            Op::Softmax {
                a,
                outer,
                len,
                inner,
            },
            &[a],
        )
    }

    /// Normalizes the last axis to zero mean and unit (biased) variance, then
    /// applies `gain` and `bias` (both shaped like the last axis).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var, TensorError> {
        let sh = self.shape(x);
        let d = *sh.last().expect("non-empty shape");
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: sh.to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let (xv, gv, bv) = (
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
        );
        let rows = xv.len() / d;
        let inv_d = T::ONE / T::from_usize(d);
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let r = T::ONE / (var + eps).sqrt();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let xh = (v - mean) * r;
                xhat.push(xh);
                out.push(xh * gv[j] + bv[j]);
            }
        }
        let value = Tensor::new(sh, out)?;
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        )
    }

    /// Mean cross-entropy of `logits: [N, K]` against class indices → `[1]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let (losses, probs) = cross_entropy_rows(self.value(logits), labels)?;
        let n = T::from_usize(labels.len());
        let mean = losses.iter().copied().sum::<T>() / n;
        self.push(
            "cross_entropy",
            Tensor::scalar(mean),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }
}

pub(super) fn sum_backward<T: Real>(sink: &mut GradSink<'_, T>, a: Var, g: &[T]) {
    sink.accumulate(a, |dst| dst.iter_mut().for_each(|d| *d += g[0]));
}

pub(super) fn mean_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    a: Var,
    (outer, len, inner): (usize, usize, usize),
    g: &[T],
) {
    let inv = T::ONE / T::from_usize(len);
    sink.accumulate(a, |dst| {
        for o in 0..outer {
            let src = &g[o * inner..(o + 1) * inner];
            for l in 0..len {
                let d = &mut dst[(o * len + l) * inner..(o * len + l + 1) * inner];
                d.iter_mut().zip(src).for_each(|(d, &s)| *d += s * inv);
            }
        }
    });
}

pub(super) fn max_backward<T: Real>(sink: &mut GradSink<'_, T>, a: Var, argmax: &[usize], g: &[T]) {
    sink.accumulate(a, |dst| {
        for (&src, &gi) in argmax.iter().zip(g) {
            dst[src] += gi;
        }
    });
}

pub(super) fn softmax_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    a: Var,
    y: &Tensor<T>,
    (outer, len, inner): (usize, usize, usize),
    g: &[T],
) {
    let y = y.data();
    sink.accumulate(a, |dst| {
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let dot: T = (0..len).map(|l| g[at(l)] * y[at(l)]).sum();
                for l in 0..len {
                    let idx = at(l);
                    dst[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    });
}

pub(super) fn layer_norm_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    x: Var,
    gain: Var,
    bias: Var,
    xhat: &[T],
    rstd: &[T],
    g: &[T],
) {
    let gv = sink.value(gain).data();
    let d = gv.len();
    sink.accumulate(bias, |db| {
        for row in g.chunks_exact(d) {
            db.iter_mut().zip(row).for_each(|(b, &v)| *b += v);
        }
    });
    sink.accumulate(gain, |dg| {
        for (row, xh) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
            for j in 0..d {
                dg[j] += row[j] * xh[j];
            }
        }
    });
    let inv_d = T::ONE / T::from_usize(d);
    sink.accumulate(x, |dx| {
        let mut dxhat = vec![T::ZERO; d];
        for (r, ((row, xh), out)) in g
            .chunks_exact(d)
            .zip(xhat.chunks_exact(d))
            .zip(dx.chunks_exact_mut(d))
            .enumerate()
        {
            let mut mean_dxhat = T::ZERO;
            let mut mean_dxhat_xhat = T::ZERO;
            for j in 0..d {
                dxhat[j] = row[j] * gv[j];
                mean_dxhat += dxhat[j];
                mean_dxhat_xhat += dxhat[j] * xh[j];
            }
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            for j in 0..d {
                out[j] += rstd[r] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
            }
        }
    });
}

pub(super) fn cross_entropy_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    logits: Var,
    labels: &[usize],
    probs: &[T],
    g: &[T],
) {
    let n = labels.len();
    let k = probs.len() / n;
    let scale = g[0] / T::from_usize(n);
    sink.accumulate(logits, |dst| {
        for (i, &label) in labels.iter().enumerate() {
            for j in 0..k {
                let onehot = if j == label { T::ONE } else { T::ZERO };
                dst[i * k + j] += (probs[i * k + j] - onehot) * scale;
            }
        }
    });
}
