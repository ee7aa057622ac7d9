//! Logit-space probabilistic Boolean activations.
//!
//! Pairs of pre-activation values are read as logits of independent events
//! and combined with logit-space AND, OR, and XNOR, either exactly
//! ([`activations::and_il`] and friends) or through cheap piecewise-linear
//! approximations ([`activations::and_ail`] and friends). Around these sit a
//! small dense-network engine ([`network`], [`train`]), task generators
//! ([`data`]), and numerical oracles ([`verify`]).
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which the verification tolerances assume.

// `!(a > b)` is used on purpose where NaN must be rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod network;
pub mod numerics;
pub mod tensor;
pub mod train;
pub mod verify;

pub use activations::{Activation, Family, Kind};
pub use ensemble::{EnsembleSpec, Strategy};
pub use error::{Error, Result};
pub use network::LayerSpec;
pub use numerics::Scalar;
pub use train::{Loss, Optimizer, Schedule, TrainConfig, TrainReport};

pub type Matrix = tensor::Matrix<f64>;
pub type Network = network::Network<f64>;
pub type Dataset = data::Dataset<f64>;

pub type Matrix32 = tensor::Matrix<f32>;
pub type Network32 = network::Network<f32>;
pub type Dataset32 = data::Dataset<f32>;
