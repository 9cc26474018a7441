//! Adversarial robustness laboratory core.
//!
//! Everything here is pure computation over in-memory buffers and builds
//! without `std` (an allocator is required). File formats, PNG decoding and
//! the command-line front end live in the `advmark` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod attack;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use autodiff::{Graph, Var};
pub use error::{AttackError, DataError, EvalError, ModelError, TensorError, TrainError};
pub use scalar::Real;
pub use tensor::Tensor;
