use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::spec::{ArchConfig, ClassifierSpec};
use crate::autodiff::{Graph, Var};
use crate::error::ModelError;
use crate::rng::{rng_from_seed, Rng};
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Real = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Named parameter tensors in a fixed declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Real = f32> {
    params: Vec<Param<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            params: Vec::new(),
            index: BTreeMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<(), ModelError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(ModelError::Spec(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, tensor });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.params[i].tensor)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.params.iter_mut().map(|p| &mut p.tensor)
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Freshly initialized parameters for `spec`; the caller validates it.
    pub(crate) fn declare(spec: &ClassifierSpec, seed: u64) -> Self {
        let mut d = Declarer {
            store: ParamStore::new(),
            rng: rng_from_seed(seed),
        };
        match &spec.arch {
            ArchConfig::Vit(cfg) => super::vit::declare(&mut d, spec, cfg),
            ArchConfig::Resnet(cfg) => super::resnet::declare(&mut d, spec, cfg),
            ArchConfig::Vgg(cfg) => super::vgg::declare(&mut d, spec, cfg),
        }
        d.store
    }

    /// Puts every parameter on `g` in store order.
    pub(crate) fn bind<'a>(&'a self, g: &mut Graph<T>, track: bool) -> Bound<'a, T> {
        let vars = self
            .params
            .iter()
            .map(|p| g.leaf(p.tensor.clone(), track))
            .collect();
        Bound { store: self, vars }
    }
}

/// Parameters placed on a graph.
pub(crate) struct Bound<'a, T: Real> {
    store: &'a ParamStore<T>,
    pub(crate) vars: Vec<Var>,
}

impl<T: Real> Bound<'_, T> {
    pub(crate) fn get(&self, name: &str) -> Result<Var, ModelError> {
        self.store
            .position(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| ModelError::MissingParam(name.into()))
    }

    /// `x @ name.weight + name.bias` over the last axis of `x`.
    pub(crate) fn linear(&self, g: &mut Graph<T>, x: Var, name: &str) -> Result<Var, ModelError> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        let y = g.matmul(x, w)?;
        Ok(g.add(y, b)?)
    }

    /// Convolution plus per-channel bias.
    pub(crate) fn conv(
        &self,
        g: &mut Graph<T>,
        x: Var,
        name: &str,
        stride: usize,
        padding: usize,
    ) -> Result<Var, ModelError> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        let y = g.conv2d(x, w, stride, padding)?;
        Ok(g.add(y, b)?)
    }

    pub(crate) fn layer_norm(&self, g: &mut Graph<T>, x: Var, name: &str) -> Result<Var, ModelError> {
        let gain = self.get(&format!("{name}.gain"))?;
        let bias = self.get(&format!("{name}.bias"))?;
        Ok(g.layer_norm(x, gain, bias, T::from_f64(LAYER_NORM_EPS))?)
    }
}

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// Standard deviation of truncated-normal initialization.
pub const TRUNC_NORMAL_STD: f64 = 0.02;

/// Appends initialized parameters in a fixed order from one RNG stream.
pub(crate) struct Declarer<T: Real> {
    store: ParamStore<T>,
    rng: Rng,
}

impl<T: Real> Declarer<T> {
    fn push(&mut self, name: String, shape: &[usize], data: Vec<f64>) {
        let t = Tensor::from_f64(shape, &data).expect("declared shapes are valid");
        self.store.insert(name, t).expect("declared names are unique");
    }

    /// N(0, std²) with draws beyond ±2 std rejected.
    pub(crate) fn trunc_normal(&mut self, name: String, shape: &[usize]) {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            if z.abs() <= 2.0 {
                data.push(z * TRUNC_NORMAL_STD);
            }
        }
        self.push(name, shape, data);
    }

    pub(crate) fn constant(&mut self, name: String, shape: &[usize], value: f64) {
        let n: usize = shape.iter().product();
        self.push(name, shape, alloc::vec![value; n]);
    }

    /// Weight `[fan_in, fan_out]`, zero bias `[fan_out]`.
    pub(crate) fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        self.trunc_normal(format!("{name}.weight"), &[fan_in, fan_out]);
        self.constant(format!("{name}.bias"), &[fan_out], 0.0);
    }

    /// Kaiming-uniform kernel `[out, in, k, k]` with bound `sqrt(6 / fan_in)`,
    /// zero bias `[out, 1, 1]`.
    pub(crate) fn conv(&mut self, name: &str, out_ch: usize, in_ch: usize, k: usize) {
        let fan_in = in_ch * k * k;
        let bound = libm::sqrt(6.0 / fan_in as f64);
        let data = (0..out_ch * fan_in)
            .map(|_| (2.0 * self.rng.random::<f64>() - 1.0) * bound)
            .collect();
        self.push(format!("{name}.weight"), &[out_ch, in_ch, k, k], data);
        self.constant(format!("{name}.bias"), &[out_ch, 1, 1], 0.0);
    }

    pub(crate) fn layer_norm(&mut self, name: &str, dim: usize) {
        self.constant(format!("{name}.gain"), &[dim], 1.0);
        self.constant(format!("{name}.bias"), &[dim], 0.0);
    }
}
