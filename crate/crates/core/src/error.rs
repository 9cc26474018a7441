use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("invalid shape {0:?}: dimensions must be positive and non-empty")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} elements, got {len}", .shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("cannot reshape {from:?} into {to:?}")]
    Reshape { from: Vec<usize>, to: Vec<usize> },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("axis {axis} out of range for rank {ndim}")]
    Axis { axis: usize, ndim: usize },
    #[error("index {index} out of bounds for extent {bound}")]
    Index { index: usize, bound: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("conv2d: kernel {kernel:?} larger than padded input {padded:?}")]
    KernelTooLarge {
        kernel: [usize; 2],
        padded: [usize; 2],
    },
    #[error("{op}: invalid argument: {detail}")]
    Argument { op: &'static str, detail: String },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid classifier spec: {0}")]
    Spec(String),
    #[error("input shape {got:?} does not match expected [N, {expected:?}]")]
    InputShape { got: Vec<usize>, expected: [usize; 3] },
    #[error("parameter `{0}` missing")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("pixel value {value} at index {index} outside [0, 1]")]
    PixelRange { index: usize, value: f64 },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("sample shape {got:?} differs from {expected:?}")]
    SampleShape { got: Vec<usize>, expected: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    Config(String),
    #[error("non-finite input gradient at step {step} (sample {sample})")]
    NonFiniteGradient { step: usize, sample: usize },
    #[error("images outside [0, 1]")]
    PixelRange,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss")]
    Diverged { epoch: usize, batch: usize },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("optimizer state does not match parameters: {0}")]
    OptimizerState(String),
    #[error("attack failed at epoch {epoch}, batch {batch}: {source}")]
    Attack {
        epoch: usize,
        batch: usize,
        source: AttackError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("roster error: {0}")]
    Roster(String),
    #[error("attack failed on batch {batch}: {source}")]
    Attack { batch: usize, source: AttackError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}
