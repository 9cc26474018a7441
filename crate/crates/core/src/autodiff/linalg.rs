use alloc::vec;

use super::{GradSink, Graph, Op, Var};
use crate::error::TensorError;
use crate::scalar::{gemm, Real, Trans};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub(crate) struct MatMulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    /// Right operand stored as `[.., n, k]`.
    trans_b: bool,
    /// Right operand is one 2-D matrix reused for every batch entry.
    shared_b: bool,
}

impl<T: Real> Graph<T> {
    /// Matrix product over the last two axes.
    ///
    /// `a: [.., m, k]`; `b` is either a single `[k, n]` matrix applied to every
    /// leading index of `a`, or `[.., k, n]` with the same leading dims.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` over the last two axes, with `b: [.., n, k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, TensorError> {
        let (ash, bsh) = (self.shape(a), self.shape(b));
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: ash.to_vec(),
            rhs: bsh.to_vec(),
        };
        if ash.len() < 2 || bsh.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (bk, n) = if trans_b {
            (bsh[bsh.len() - 1], bsh[bsh.len() - 2])
        } else {
            (bsh[bsh.len() - 2], bsh[bsh.len() - 1])
        };
        if bk != k {
            return Err(mismatch());
        }
        let lead = &ash[..ash.len() - 2];
        let shared_b = bsh.len() == 2;
        if !shared_b && bsh[..bsh.len() - 2] != *lead {
            return Err(mismatch());
        }
        let batch: usize = lead.iter().product();
        let dims = MatMulDims {
            batch,
            m,
            k,
            n,
            trans_b,
            shared_b,
        };
        let mut out_shape = lead.to_vec();
        out_shape.extend_from_slice(&[m, n]);

        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let tb = if trans_b { Trans::Yes } else { Trans::No };
        let mut out = vec![T::ZERO; batch * m * n];
        if shared_b {
            gemm(batch * m, k, n, ad, Trans::No, bd, tb, &mut out, false);
        } else {
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &ad[i * m * k..],
                    Trans::No,
                    &bd[i * k * n..],
                    tb,
                    &mut out[i * m * n..],
                    false,
                );
            }
        }
        let value = Tensor::new(&out_shape, out)?;
        self.push("matmul", value, Op::MatMul { a, b, dims }, &[a, b])
    }
}

pub(super) fn matmul_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    a: Var,
    b: Var,
    d: &MatMulDims,
    g: &[T],
) {
    let (ad, bd) = (sink.value(a).data(), sink.value(b).data());
    let MatMulDims {
        batch,
        m,
        k,
        n,
        trans_b,
        shared_b,
    } = *d;
    let rows = if shared_b { batch * m } else { m };
    let reps = if shared_b { 1 } else { batch };

    // dA = dC · op(B)ᵀ
    sink.accumulate(a, |da| {
        for i in 0..reps {
            let boff = if shared_b { 0 } else { i * k * n };
            let tb = if trans_b { Trans::No } else { Trans::Yes };
            gemm(
                rows,
                n,
                k,
                &g[i * rows * n..],
                Trans::No,
                &bd[boff..],
                tb,
                &mut da[i * rows * k..],
                true,
            );
        }
    });
    // dB = op(A)ᵀ · dC, or (dC)ᵀ · A when B is stored transposed.
    sink.accumulate(b, |db| {
        for i in 0..reps {
            let boff = if shared_b { 0 } else { i * k * n };
            let (ga, gg) = (&ad[i * rows * k..], &g[i * rows * n..]);
            if trans_b {
                gemm(n, rows, k, gg, Trans::Yes, ga, Trans::No, &mut db[boff..], true);
            } else {
                gemm(k, rows, n, ga, Trans::Yes, gg, Trans::No, &mut db[boff..], true);
            }
        }
    });
}
