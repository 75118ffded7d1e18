//! Parameter estimation for fBm-driven processes with path signatures and
//! per-level multi-head attention.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the double-precision instantiation used by
//! training and the command line tools.

// `!(x > 0.0)` is used deliberately so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod models;
pub mod nn;
pub mod numerics;
pub mod pathsim;
pub mod signature;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations used by the command line tools.
pub type Model = models::Model<f64>;
pub type Network = nn::Network<f64>;
pub type ParamStore = nn::ParamStore<f64>;
pub type Path = pathsim::Path<f64>;
pub type LabeledDataset = pathsim::LabeledDataset<f64>;
pub type TruncatedSignature = signature::TruncatedSignature<f64>;
