use alloc::vec;
use alloc::vec::Vec;

use super::{GradSink, Graph, Op, Var};
use crate::error::TensorError;
use crate::scalar::{gemm, Real, Trans};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds sample `img` (`[C, H, W]`) into `[C·kh·kw, oh·ow]`.
    fn im2col<T: Real>(&self, img: &[T], col: &mut [T]) {
        let p = self.positions();
        for ci in 0..self.c {
            let plane = &img[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            line.iter_mut().for_each(|v| *v = T::ZERO);
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::ZERO
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeometry::im2col`]: scatters `col` back into `img`.
    fn col2im_add<T: Real>(&self, col: &[T], img: &mut [T]) {
        let p = self.positions();
        for ci in 0..self.c {
            let plane = &mut img[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let line = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                line[ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Graph<T> {
    /// 2-D cross-correlation (no kernel flip).
    ///
    /// `input: [N, C, H, W]`, `kernel: [F, C, kh, kw]` → `[N, F, H', W']` with
    /// `H' = (H + 2·padding − kh) / stride + 1`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let (ish, ksh) = (self.shape(input), self.shape(kernel));
        if ish.len() != 4 || ksh.len() != 4 || ish[1] != ksh[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: ish.to_vec(),
                rhs: ksh.to_vec(),
            });
        }
        if stride == 0 {
            return Err(TensorError::Argument {
                op: "conv2d",
                detail: "stride must be positive".into(),
            });
        }
        let (n, c, h, w) = (ish[0], ish[1], ish[2], ish[3]);
        let (f, kh, kw) = (ksh[0], ksh[2], ksh[3]);
        let (ph, pw) = (h + 2 * padding, w + 2 * padding);
        if kh > ph || kw > pw {
            return Err(TensorError::KernelTooLarge {
                kernel: [kh, kw],
                padded: [ph, pw],
            });
        }
        let geom = ConvGeometry {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            stride,
            pad: padding,
            oh: (ph - kh) / stride + 1,
            ow: (pw - kw) / stride + 1,
        };
        let (x, k) = (self.value(input).data(), self.value(kernel).data());
        let (patch, pos) = (geom.patch(), geom.positions());
        let mut col = vec![T::ZERO; patch * pos];
        let mut out = vec![T::ZERO; n * f * pos];
        for s in 0..n {
            geom.im2col(&x[s * c * h * w..(s + 1) * c * h * w], &mut col);
            gemm(
                f,
                patch,
                pos,
                k,
                Trans::No,
                &col,
                Trans::No,
                &mut out[s * f * pos..],
                false,
            );
        }
        let value = Tensor::new(&[n, f, geom.oh, geom.ow], out)?;
        self.push(
            "conv2d",
            value,
            Op::Conv2d {
                input,
                kernel,
                geom,
            },
            &[input, kernel],
        )
    }

    /// Max pooling over `size×size` windows with the given stride, no padding.
    /// Ties resolve to the first maximal element in row-major window order.
    pub fn max_pool2d(&mut self, input: Var, size: usize, stride: usize) -> Result<Var, TensorError> {
        let sh = self.shape(input);
        if sh.len() != 4 || size == 0 || stride == 0 || sh[2] < size || sh[3] < size {
            return Err(TensorError::Argument {
                op: "max_pool2d",
                detail: alloc::format!("window {size}/stride {stride} invalid for input {sh:?}"),
            });
        }
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        let (oh, ow) = ((h - size) / stride + 1, (w - size) / stride + 1);
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for dy in 0..size {
                        for dx in 0..size {
                            let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        self.push("max_pool2d", value, Op::MaxPool2d { input, argmax }, &[input])
    }
}

pub(super) fn conv2d_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    input: Var,
    kernel: Var,
    geom: &ConvGeometry,
    g: &[T],
) {
    let (x, k) = (sink.value(input).data(), sink.value(kernel).data());
    let (patch, pos) = (geom.patch(), geom.positions());
    let chw = geom.c * geom.h * geom.w;
    let fp = geom.f * pos;
    let mut col = vec![T::ZERO; patch * pos];

    if sink.wants(kernel) {
        sink.accumulate(kernel, |dk| {
            for s in 0..geom.n {
                geom.im2col(&x[s * chw..(s + 1) * chw], &mut col);
                // dK += dOut_s · colᵀ
                gemm(
                    geom.f,
                    pos,
                    patch,
                    &g[s * fp..],
                    Trans::No,
                    &col,
                    Trans::Yes,
                    dk,
                    true,
                );
            }
        });
    }
    if sink.wants(input) {
        sink.accumulate(input, |dx| {
            for s in 0..geom.n {
                // dcol = Kᵀ · dOut_s
                gemm(
                    patch,
                    geom.f,
                    pos,
                    k,
                    Trans::Yes,
                    &g[s * fp..],
                    Trans::No,
                    &mut col,
                    false,
                );
                geom.col2im_add(&col, &mut dx[s * chw..(s + 1) * chw]);
            }
        });
    }
}

pub(super) fn max_pool_backward<T: Real>(
    sink: &mut GradSink<'_, T>,
    input: Var,
    argmax: &[usize],
    g: &[T],
) {
    sink.accumulate(input, |dx| {
        for (&src, &gi) in argmax.iter().zip(g) {
            dx[src] += gi;
        }
    });
}
