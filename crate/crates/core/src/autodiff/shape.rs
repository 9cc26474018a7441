use alloc::vec;
use alloc::vec::Vec;

use super::{GradSink, Graph, Op, Var};
use crate::error::TensorError;
use crate::scalar::Real;
use crate::tensor::{strides, Tensor};

/// Copies `src` (shaped `shape`) into axis order `perm`.
fn permute_data<T: Real>(src: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let step: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let rank = shape.len();
    let inner_len = out_shape[rank - 1];
    let inner_step = step[rank - 1];
    let mut out = Vec::with_capacity(src.len());
    let mut counter = vec![0usize; rank];
    let mut base = 0usize;
    let outer_count = src.len() / inner_len;
    for _ in 0..outer_count {
        if inner_step == 1 {
            out.extend_from_slice(&src[base..base + inner_len]);
        } else {
            out.extend((0..inner_len).map(|i| src[base + i * inner_step]));
        }
        for ax in (0..rank - 1).rev() {
            counter[ax] += 1;
            base += step[ax];
            if counter[ax] < out_shape[ax] {
                break;
            }
            base -= step[ax] * out_shape[ax];
            counter[ax] = 0;
        }
    }
    out
}

impl<T: Real> Graph<T> {
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape { a }, &[a])
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var, TensorError> {
        let sh = self.shape(a);
        let mut seen = vec![false; sh.len()];
        if perm.len() != sh.len() {
            return Err(TensorError::Argument {
                op: "permute",
                detail: alloc::format!("permutation {perm:?} has wrong rank for {sh:?}"),
            });
        }
        for &p in perm {
            if p >= sh.len() || seen[p] {
                return Err(TensorError::Argument {
                    op: "permute",
                    detail: alloc::format!("{perm:?} is not a permutation"),
                });
            }
            seen[p] = true;
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| sh[p]).collect();
        let data = permute_data(self.value(a).data(), sh, perm);
        let value = Tensor::new(&out_shape, data)?;
        self.push(
            "permute",
            value,
            Op::Permute {
                a,
                perm: perm.to_vec(),
            },
            &[a],
        )
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, a: Var, d0: usize, d1: usize) -> Result<Var, TensorError> {
        let rank = self.shape(a).len();
        if d0 >= rank || d1 >= rank {
            return Err(TensorError::Axis {
                axis: d0.max(d1),
                ndim: rank,
            });
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(d0, d1);
        self.permute(a, &perm)
    }

    /// Gathers rows of `table: [V, D]` → `[indices.len(), D]`.
    pub fn embedding_lookup(&mut self, table: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let sh = self.shape(table);
        if sh.len() != 2 {
            return Err(TensorError::Argument {
                op: "embedding_lookup",
                detail: alloc::format!("table must be 2-D, got {sh:?}"),
            });
        }
        if indices.is_empty() {
            return Err(TensorError::Empty);
        }
        let (v, d) = (sh[0], sh[1]);
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= v {
                return Err(TensorError::Index { index: i, bound: v });
            }
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(&[indices.len(), d], out)?;
        self.push(
            "embedding_lookup",
            value,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            &[table],
        )
    }

    /// Joins tensors along `axis`; all other dims must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = *inputs.first().ok_or(TensorError::Empty)?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::Axis {
                axis,
                ndim: base.len(),
            });
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut total = 0;
        let mut chunks = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let sh = self.shape(v);
            let compatible = sh.len() == base.len()
                && sh
                    .iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: sh.to_vec(),
                });
            }
            total += sh[axis];
            chunks.push(sh[axis] * inner);
        }
        let row: usize = chunks.iter().sum();
        let mut out = Vec::with_capacity(outer * row);
        for o in 0..outer {
            for (&v, &c) in inputs.iter().zip(&chunks) {
                out.extend_from_slice(&self.value(v).data()[o * c..(o + 1) * c]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(&shape, out)?;
        self.push(
            "concat",
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer,
                chunks,
            },
            inputs,
        )
    }
}

pub(super) fn permute_backward<T: Real>(sink: &mut GradSink<'_, T>, a: Var, perm: &[usize], g: &[T]) {
    let in_shape = sink.value(a).shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let mut inverse = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let back = permute_data(g, &out_shape, &inverse);
    sink.accumulate(a, |dst| super::add_into(dst, &back));
}

pub(super) fn embedding_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    table: Var,
    indices: &[usize],
    g: &[T],
) {
    let d = g.len() / indices.len();
    sink.accumulate(table, |dst| {
        for (row, &i) in g.chunks_exact(d).zip(indices) {
            super::add_into(&mut dst[i * d..(i + 1) * d], row);
        }
    });
}

pub(super) fn concat_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    inputs: &[Var],
    outer: usize,
    chunks: &[usize],
    g: &[T],
) {
    let row: usize = chunks.iter().sum();
    let mut offset = 0;
    for (&v, &c) in inputs.iter().zip(chunks) {
        sink.accumulate(v, |dst| {
            for o in 0..outer {
                let src = &g[o * row + offset..o * row + offset + c];
                super::add_into(&mut dst[o * c..(o + 1) * c], src);
            }
        });
        offset += c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_matches_index_formula() {
        let shape = [2, 3, 4];
        let src: Vec<f64> = (0..24).map(|v| v as f64).collect();
        let out = permute_data(&src, &shape, &[2, 0, 1]);
        // out[k][i][j] = src[i][j][k]
        for k in 0..4 {
            for i in 0..2 {
                for j in 0..3 {
                    assert_eq!(out[(k * 2 + i) * 3 + j], src[(i * 3 + j) * 4 + k]);
                }
            }
        }
    }
}
