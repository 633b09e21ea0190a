//! Frequency-diverse computational microwave imaging: sensing-matrix
//! synthesis, forward measurement, classical inversion, and an
//! attention-gated multi-task GAN that reconstructs and classifies targets
//! directly from back-scattered measurements.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attgan;
pub mod autodiff;
pub(crate) mod binio;
pub mod classical;
pub mod data_io;
pub mod error;
pub mod forward_model;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use autodiff::{Graph, Padding, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
