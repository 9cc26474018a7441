//! Reverse-mode automatic differentiation on a dynamic tape.
//!
//! A [`Graph`] records every primitive applied to its variables in creation
//! order, which is a topological order: a node's inputs always have smaller
//! indices. [`Graph::backward`] walks the tape from the loss back to index 0
//! and accumulates vector-Jacobian products into the inputs that require a
//! gradient. Graphs are cheap to build and meant to be discarded after one
//! forward/backward pass.

mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod shape;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub(crate) use elementwise::Broadcast;
pub use reduce::cross_entropy_rows;

/// Handle to a node on a [`Graph`]'s tape. Only meaningful for the graph that
/// created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    /// Position on the tape (topological order index).
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T: Real> {
    Leaf,
    Add {
        a: Var,
        b: Var,
        bcast: Broadcast,
    },
    Mul {
        a: Var,
        b: Var,
        bcast: Broadcast,
    },
    Affine {
        a: Var,
        scale: T,
    },
    Relu {
        a: Var,
    },
    Gelu {
        a: Var,
    },
    MatMul {
        a: Var,
        b: Var,
        dims: linalg::MatMulDims,
    },
    Conv2d {
        input: Var,
        kernel: Var,
        geom: conv::ConvGeometry,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    Softmax {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Sum {
        a: Var,
    },
    Mean {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Max {
        a: Var,
        argmax: Vec<usize>,
    },
    Reshape {
        a: Var,
    },
    Permute {
        a: Var,
        perm: Vec<usize>,
    },
    Embedding {
        table: Var,
        indices: Vec<usize>,
    },
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        chunks: Vec<usize>,
    },
}

struct Node<T: Real> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
    grad: Option<Tensor<T>>,
}

/// Single-owner tape of tensor operations.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    /// New tape. Non-finite checking defaults to on in debug builds.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: cfg!(debug_assertions),
        }
    }

    /// Enables or disables the NaN/Inf check at every operation boundary.
    pub fn with_finite_checks(mut self, enabled: bool) -> Self {
        self.check_finite = enabled;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input variable. Gradients are retained for leaves created with
    /// `requires_grad = true`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    /// Discrete state of every tracked piecewise operation: the sign of each
    /// ReLU input and the winning index of each max. Inputs with equal
    /// signatures lie in the same smooth piece of the recorded function.
    /// Operations on untracked values keep no record and do not appear.
    pub fn region_signature(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { a } => sig.extend(self.value(*a).data().iter().map(|&v| usize::from(v > T::ZERO))),
                Op::MaxPool2d { argmax, .. } | Op::Max { argmax, .. } => sig.extend_from_slice(argmax),
                _ => {}
            }
        }
        sig
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub(crate) fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        parents: &[Var],
    ) -> Result<Var, TensorError> {
        if self.check_finite && !value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op: if requires_grad { op } else { Op::Leaf },
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Back-propagates from a single-element `loss`, adding `dloss/dleaf`
    /// into every tracked leaf. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(TensorError::NotScalar(root.value.shape().to_vec()));
        }
        if !root.requires_grad {
            return Err(TensorError::Argument {
                op: "backward",
                detail: "loss does not depend on any variable that requires a gradient".into(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::ONE]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(existing) => existing
                        .data_mut()
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(e, v)| *e += *v),
                    None => {
                        node.grad = Some(Tensor::new(node.value.shape(), g)?);
                    }
                }
                continue;
            }
            self.backward_node(i, &g, &mut grads);
        }
        if self.check_finite {
            for node in &self.nodes {
                if let Some(gr) = &node.grad {
                    if !gr.all_finite() {
                        return Err(TensorError::NonFinite { op: "backward" });
                    }
                }
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let mut sink = GradSink {
            nodes: &self.nodes,
            grads,
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add { a, b, bcast } => elementwise::add_backward(&mut sink, *a, *b, bcast, g),
            Op::Mul { a, b, bcast } => elementwise::mul_backward(&mut sink, *a, *b, bcast, g),
            Op::Affine { a, scale } => elementwise::affine_backward(&mut sink, *a, *scale, g),
            Op::Relu { a } => elementwise::relu_backward(&mut sink, *a, g),
            Op::Gelu { a } => elementwise::gelu_backward(&mut sink, *a, g),
            Op::MatMul { a, b, dims } => linalg::matmul_backward(&mut sink, *a, *b, dims, g),
            Op::Conv2d {
                input,
                kernel,
                geom,
            } => conv::conv2d_backward(&mut sink, *input, *kernel, geom, g),
            Op::MaxPool2d { input, argmax } => conv::max_pool_backward(&mut sink, *input, argmax, g),
            Op::Softmax {
                a,
                outer,
                len,
                inner,
            } => reduce::softmax_backward(&mut sink, *a, &node.value, (*outer, *len, *inner), g),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => reduce::layer_norm_backward(&mut sink, *x, *gain, *bias, xhat, rstd, g),
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => reduce::cross_entropy_backward(&mut sink, *logits, labels, probs, g),
            Op::Sum { a } => reduce::sum_backward(&mut sink, *a, g),
            Op::Mean {
                a,
                outer,
                len,
                inner,
            } => reduce::mean_backward(&mut sink, *a, (*outer, *len, *inner), g),
            Op::Max { a, argmax } => reduce::max_backward(&mut sink, *a, argmax, g),
            Op::Reshape { a } => sink.accumulate(*a, |dst| add_into(dst, g)),
            Op::Permute { a, perm } => shape::permute_backward(&mut sink, *a, perm, g),
            Op::Embedding { table, indices } => {
                shape::embedding_backward(&mut sink, *table, indices, g)
            }
            Op::Concat {
                inputs,
                outer,
                chunks,
            } => shape::concat_backward(&mut sink, inputs, *outer, chunks, g),
        }
    }
}

/// Gradient buffers for the nodes upstream of the one being processed.
pub(crate) struct GradSink<'a, T: Real> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<'a, T: Real> GradSink<'a, T> {
    pub(crate) fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn value(&self, v: Var) -> &'a Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Runs `f` on `v`'s (zero-initialized on first use) gradient buffer when
    /// `v` requires a gradient.
    pub(crate) fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.numel();
        let buf = self.grads[v.0].get_or_insert_with(|| vec![T::ZERO; n]);
        f(buf);
    }
}

pub(crate) fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s);
}
