use alloc::vec::Vec;

use super::{add_into, GradSink, Graph, Op, Var};
use crate::error::TensorError;
use crate::scalar::Real;
use crate::tensor::{strides, Tensor};

/// How the right operand of a binary op maps onto the left operand's shape.
pub(crate) enum Broadcast {
    Same,
    /// Right operand repeats with this period (its shape is a suffix of the
    /// left shape).
    Suffix(usize),
    /// Right operand is `[C, 1, .., 1]` against a run of `inner` elements per
    /// channel: index `j = (i / inner) % channels`.
    Channel { inner: usize, channels: usize },
    /// Explicit output-index → right-operand-index table.
    Map(Vec<usize>),
}

impl Broadcast {
    fn resolve(lhs: &[usize], rhs: &[usize], op: &'static str) -> Result<Self, TensorError> {
        if lhs == rhs {
            return Ok(Broadcast::Same);
        }
        let mismatch = || TensorError::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        };
        // Leading unit dims of the right operand are irrelevant.
        let trimmed: &[usize] = {
            let lead = rhs.iter().take_while(|&&d| d == 1).count();
            &rhs[lead.min(rhs.len() - 1)..]
        };
        if trimmed.len() > lhs.len() {
            return Err(mismatch());
        }
        let offset = lhs.len() - trimmed.len();
        if lhs[offset..] == *trimmed {
            return Ok(Broadcast::Suffix(trimmed.iter().product()));
        }
        if trimmed.len() > 1
            && trimmed[0] == lhs[offset]
            && trimmed[1..].iter().all(|&d| d == 1)
        {
            return Ok(Broadcast::Channel {
                inner: lhs[offset + 1..].iter().product(),
                channels: trimmed[0],
            });
        }
        let mut rstrides = alloc::vec![0usize; lhs.len()];
        let ts = strides(trimmed);
        for (j, &d) in trimmed.iter().enumerate() {
            let lhs_d = lhs[offset + j];
            if d == lhs_d {
                rstrides[offset + j] = ts[j];
            } else if d != 1 {
                return Err(mismatch());
            }
        }
        let numel: usize = lhs.iter().product();
        let mut map = Vec::with_capacity(numel);
        let mut counter = alloc::vec![0usize; lhs.len()];
        let mut idx = 0usize;
        for _ in 0..numel {
            map.push(idx);
            for ax in (0..lhs.len()).rev() {
                counter[ax] += 1;
                idx += rstrides[ax];
                if counter[ax] < lhs[ax] {
                    break;
                }
                idx -= rstrides[ax] * lhs[ax];
                counter[ax] = 0;
            }
        }
        Ok(Broadcast::Map(map))
    }

    #[inline]
    fn for_each(&self, n: usize, mut f: impl FnMut(usize, usize)) {
        match self {
            Broadcast::Same => (0..n).for_each(|i| f(i, i)),
            Broadcast::Suffix(p) => (0..n).for_each(|i| f(i, i % p)),
            Broadcast::Channel { inner, channels } => {
                (0..n).for_each(|i| f(i, (i / inner) % channels))
            }
            Broadcast::Map(m) => m.iter().enumerate().for_each(|(i, &j)| f(i, j)),
        }
    }
}

impl<T: Real> Graph<T> {
    /// `a + b`, where `b` may broadcast into `a`'s shape (right-aligned, unit
    /// dims repeat).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let bcast = Broadcast::resolve(self.shape(a), self.shape(b), "add")?;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = av.data().to_vec();
        let bd = bv.data();
        bcast.for_each(out.len(), |i, j| out[i] += bd[j]);
        let value = Tensor::new(av.shape(), out)?;
        self.push("add", value, Op::Add { a, b, bcast }, &[a, b])
    }

    /// Elementwise product with the same broadcasting rule as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let bcast = Broadcast::resolve(self.shape(a), self.shape(b), "mul")?;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = av.data().to_vec();
        let bd = bv.data();
        bcast.for_each(out.len(), |i, j| out[i] *= bd[j]);
        let value = Tensor::new(av.shape(), out)?;
        self.push("mul", value, Op::Mul { a, b, bcast }, &[a, b])
    }

    /// `a * scale + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Result<Var, TensorError> {
        let value = self.value(a).map(|v| v * scale + shift);
        self.push("affine", value, Op::Affine { a, scale }, &[a])
    }

    pub fn scale(&mut self, a: Var, scale: T) -> Result<Var, TensorError> {
        self.affine(a, scale, T::ZERO)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self
            .value(a)
            .map(|v| if v > T::ZERO { v } else { T::ZERO });
        self.push("relu", value, Op::Relu { a }, &[a])
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var, TensorError> {
        let half = T::from_f64(0.5);
        let inv_sqrt2 = T::from_f64(core::f64::consts::FRAC_1_SQRT_2);
        let value = self
            .value(a)
            .map(|x| half * x * (T::ONE + (x * inv_sqrt2).erf()));
        self.push("gelu", value, Op::Gelu { a }, &[a])
    }
}

pub(super) fn add_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    a: Var,
    b: Var,
    bcast: &Broadcast,
    g: &[T],
) {
    sink.accumulate(a, |dst| add_into(dst, g));
    sink.accumulate(b, |dst| bcast.for_each(g.len(), |i, j| dst[j] += g[i]));
}

pub(super) fn mul_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    a: Var,
    b: Var,
    bcast: &Broadcast,
    g: &[T],
) {
    if sink.wants(a) {
        let bd = sink.value(b).data();
        sink.accumulate(a, |dst| bcast.for_each(g.len(), |i, j| dst[i] += g[i] * bd[j]));
    }
    if sink.wants(b) {
        let ad = sink.value(a).data();
        sink.accumulate(b, |dst| bcast.for_each(g.len(), |i, j| dst[j] += g[i] * ad[i]));
    }
}

pub(super) fn affine_backward<T: Real>(sink: &mut GradSink<'_, T>, a: Var, scale: T, g: &[T]) {
    sink.accumulate(a, |dst| {
        dst.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi * scale)
    });
}

pub(super) fn relu_backward<T: Real>(sink: &mut GradSink<'_, T>, a: Var, g: &[T]) {
    let x = sink.value(a).data();
    sink.accumulate(a, |dst| {
        for ((d, &gi), &xi) in dst.iter_mut().zip(g).zip(x) {
            if xi > T::ZERO {
                *d += gi;
            }
        }
    });
}

pub(super) fn gelu_backward<T: Real>(sink: &mut GradSink<'_, T>, a: Var, g: &[T]) {
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(core::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = T::from_f64(0.398_942_280_401_432_7);
    let x = sink.value(a).data();
    sink.accumulate(a, |dst| {
        for ((d, &gi), &xi) in dst.iter_mut().zip(g).zip(x) {
            let cdf = half * (T::ONE + (xi * inv_sqrt2).erf());
            let pdf = inv_sqrt_2pi * (-(half * xi * xi)).exp();
            *d += gi * (cdf + xi * pdf);
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_kinds() {
        assert!(matches!(
            Broadcast::resolve(&[2, 3], &[2, 3], "t").unwrap(),
            Broadcast::Same
        ));
        assert!(matches!(
            Broadcast::resolve(&[4, 2, 3], &[1, 3], "t").unwrap(),
            Broadcast::Suffix(3)
        ));
        let channel = Broadcast::resolve(&[2, 3, 2], &[3, 1], "t").unwrap();
        assert!(matches!(channel, Broadcast::Channel { inner: 2, channels: 3 }));
        let mut seen = Vec::new();
        channel.for_each(12, |_, j| seen.push(j));
        assert_eq!(seen, [0, 0, 1, 1, 2, 2, 0, 0, 1, 1, 2, 2]);
        match Broadcast::resolve(&[2, 2, 3], &[2, 1, 3], "t").unwrap() {
            Broadcast::Map(m) => assert_eq!(m, [0, 1, 2, 0, 1, 2, 3, 4, 5, 3, 4, 5]),
            _ => panic!("expected explicit map"),
        }
        assert!(Broadcast::resolve(&[2, 3], &[2], "t").is_err());
        assert!(Broadcast::resolve(&[3], &[2, 3], "t").is_err());
    }

    #[test]
    fn channel_bias_broadcast() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[1, 2, 1, 2]));
        let b = g.constant(Tensor::from_f64(&[2, 1, 1], &[1.0, 2.0]).unwrap());
        let y = g.add(x, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
