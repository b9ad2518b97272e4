//! Deep-ensemble regression with an ε-agreement training criterion.
//!
//! The crate is generic over the floating-point type through [`Scalar`]
//! (implemented for `f32` and `f64`); the aliases at the bottom of this file
//! name the common double-precision instantiations.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nn;
pub mod numerics;
pub mod scalar;

pub use error::{Error, Result};
pub use losses::{LossKind, LossSpec};
pub use scalar::Scalar;

pub type Dataset64 = data::Dataset<f64>;
pub type Mlp64 = nn::Mlp<f64>;
pub type Mlp32 = nn::Mlp<f32>;
pub type Ensemble64 = ensemble::EnsembleModel<f64>;
pub type Ensemble32 = ensemble::EnsembleModel<f32>;
pub type Prediction64 = ensemble::GaussianPrediction<f64>;
