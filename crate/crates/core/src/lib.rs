//! Post-hoc uncertainty estimation for Gaussian-splatting scenes.
//!
//! Per-primitive representations of training-view visibility and
//! reconstruction error are rendered into uncertainty feature maps for
//! novel views and regressed against the true rendering or depth error.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fisher;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod regression;
pub mod render;
pub mod representations;
pub mod scene;
pub mod sh;
pub mod synthetic;

pub use error::{Error, Result};
