//! Image classifiers: a small vision transformer, a small residual network
//! and a small VGG-style network, all `[N, C, H, W]` pixels in `[0, 1]` →
//! `[N, K]` logits.
//!
//! Pixels are normalized inside the model (`(x − 0.5) / 0.5` per channel), so
//! attacks and input gradients always live in raw pixel space.

mod params;
mod resnet;
mod spec;
mod vgg;
mod vit;

use alloc::vec::Vec;

pub use params::{Param, ParamStore, TRUNC_NORMAL_STD};
pub use spec::{
    parameter_layout, ArchConfig, Architecture, ClassifierSpec, ResnetConfig, VggConfig, VitConfig,
};
pub use vit::sequence_length;

use crate::autodiff::{cross_entropy_rows, Graph, Var};
use crate::error::ModelError;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Anything that maps a pixel batch to class logits on a graph.
pub trait Classifier<T: Real = f32> {
    /// `[C, H, W]` of one input image.
    fn input_dims(&self) -> [usize; 3];

    fn num_classes(&self) -> usize;

    /// Appends the forward pass for `images: [N, C, H, W]` to `g` and returns
    /// the `[N, K]` logits. Parameters enter as constants.
    fn logits(&self, g: &mut Graph<T>, images: Var) -> Result<Var, ModelError>;
}

/// A classifier spec with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Real = f32> {
    spec: ClassifierSpec,
    params: ParamStore<T>,
}

impl<T: Real> Model<T> {
    /// Fresh model with parameters initialized from `seed`.
    pub fn new(spec: ClassifierSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let params = ParamStore::declare(&spec, seed);
        Ok(Self { spec, params })
    }

    /// Wraps existing parameters after checking names, order and shapes
    /// against the spec's layout.
    pub fn from_params(spec: ClassifierSpec, params: ParamStore<T>) -> Result<Self, ModelError> {
        let layout = parameter_layout(&spec)?;
        for (i, (name, shape)) in layout.iter().enumerate() {
            let t = params
                .get(name)
                .ok_or_else(|| ModelError::MissingParam(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name: name.clone(),
                    got: t.shape().to_vec(),
                    expected: shape.clone(),
                });
            }
            if params.position(name) != Some(i) {
                return Err(ModelError::Spec(alloc::format!(
                    "parameter `{name}` out of declaration order"
                )));
            }
        }
        if params.len() != layout.len() {
            return Err(ModelError::Spec(alloc::format!(
                "expected {} parameters, got {}",
                layout.len(),
                params.len()
            )));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            params: self.params.cast(),
        }
    }

    /// Forward pass with parameters as leaves that track gradients when
    /// `track_params`. Returns logits and the parameter vars in store order.
    pub fn logits_with_params(
        &self,
        g: &mut Graph<T>,
        images: Var,
        track_params: bool,
    ) -> Result<(Var, Vec<Var>), ModelError> {
        check_input(g.shape(images), self.input_dims())?;
        let bound = self.params.bind(g, track_params);
        let two = T::from_f64(2.0);
        let x = g.affine(images, two, -T::ONE)?;
        let out = match &self.spec.arch {
            ArchConfig::Vit(cfg) => vit::logits(g, &bound, &self.spec, cfg, x)?,
            ArchConfig::Resnet(cfg) => resnet::logits(g, &bound, cfg, x)?,
            ArchConfig::Vgg(cfg) => vgg::logits(g, &bound, &self.spec, cfg, x)?,
        };
        Ok((out, bound.vars))
    }

    /// Mean cross-entropy on a batch with its gradient for every parameter
    /// (store order) and the logits.
    pub fn loss_and_gradients(
        &self,
        images: &Tensor<T>,
        labels: &[usize],
    ) -> Result<ParamGradients<T>, ModelError> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let (logits, vars) = self.logits_with_params(&mut g, x, true)?;
        let loss = g.cross_entropy(logits, labels)?;
        g.backward(loss)?;
        let grads = vars
            .iter()
            .zip(self.params.iter())
            .map(|(&v, p)| {
                g.take_grad(v)
                    .unwrap_or_else(|| Tensor::zeros(p.tensor.shape()))
            })
            .collect();
        Ok(ParamGradients {
            loss: g.value(loss).data()[0],
            logits: g.value(logits).clone(),
            grads,
        })
    }
}

impl<T: Real> Classifier<T> for Model<T> {
    fn input_dims(&self) -> [usize; 3] {
        self.spec.input_dims()
    }

    fn num_classes(&self) -> usize {
        self.spec.classes
    }

    fn logits(&self, g: &mut Graph<T>, images: Var) -> Result<Var, ModelError> {
        Ok(self.logits_with_params(g, images, false)?.0)
    }
}

#[derive(Clone, Debug)]
pub struct ParamGradients<T: Real = f32> {
    pub loss: T,
    pub logits: Tensor<T>,
    /// One gradient per parameter, store order.
    pub grads: Vec<Tensor<T>>,
}

/// Per-sample losses, logits and the gradient of the batch-mean loss with
/// respect to the raw input pixels.
#[derive(Clone, Debug)]
pub struct InputGradient<T: Real = f32> {
    pub losses: Vec<T>,
    pub logits: Tensor<T>,
    pub grad: Tensor<T>,
}

fn check_input(shape: &[usize], expected: [usize; 3]) -> Result<usize, ModelError> {
    if shape.len() != 4 || shape[1..] != expected {
        return Err(ModelError::InputShape {
            got: shape.to_vec(),
            expected,
        });
    }
    Ok(shape[0])
}

/// Logits `[N, K]` for a batch.
pub fn forward<T: Real, C: Classifier<T> + ?Sized>(
    model: &C,
    images: &Tensor<T>,
) -> Result<Tensor<T>, ModelError> {
    check_input(images.shape(), model.input_dims())?;
    let mut g = Graph::new();
    let x = g.constant(images.clone());
    let out = model.logits(&mut g, x)?;
    Ok(g.value(out).clone())
}

/// [`Graph::region_signature`] of the forward pass on `images`.
pub fn region_signature<T: Real, C: Classifier<T> + ?Sized>(
    model: &C,
    images: &Tensor<T>,
) -> Result<Vec<usize>, ModelError> {
    check_input(images.shape(), model.input_dims())?;
    let mut g = Graph::new();
    let x = g.leaf(images.clone(), true);
    model.logits(&mut g, x)?;
    Ok(g.region_signature())
}

/// Gradient of the mean cross-entropy against `labels` with respect to the
/// input pixels. Model parameters are untouched.
pub fn loss_and_input_gradient<T: Real, C: Classifier<T> + ?Sized>(
    model: &C,
    images: &Tensor<T>,
    labels: &[usize],
) -> Result<InputGradient<T>, ModelError> {
    check_input(images.shape(), model.input_dims())?;
    let mut g = Graph::new();
    let x = g.leaf(images.clone(), true);
    let logits = model.logits(&mut g, x)?;
    let loss = g.cross_entropy(logits, labels)?;
    g.backward(loss)?;
    let logits = g.value(logits).clone();
    let (losses, _) = cross_entropy_rows(&logits, labels)?;
    let grad = g
        .take_grad(x)
        .unwrap_or_else(|| Tensor::zeros(images.shape()));
    Ok(InputGradient {
        losses,
        logits,
        grad,
    })
}

pub fn input_gradient<T: Real, C: Classifier<T> + ?Sized>(
    model: &C,
    images: &Tensor<T>,
    labels: &[usize],
) -> Result<Tensor<T>, ModelError> {
    Ok(loss_and_input_gradient(model, images, labels)?.grad)
}

/// Predicted class per sample.
pub fn predict<T: Real, C: Classifier<T> + ?Sized>(
    model: &C,
    images: &Tensor<T>,
) -> Result<Vec<usize>, ModelError> {
    Ok(argmax_rows(&forward(model, images)?))
}

/// Row-wise argmax of `[N, K]`; ties go to the lowest index.
pub fn argmax_rows<T: Real>(logits: &Tensor<T>) -> Vec<usize> {
    let k = *logits.shape().last().expect("tensors have rank ≥ 1");
    logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests;
