//! Stochastic circuit simulation with generalized polynomial chaos.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod detsolve;
pub mod error;
pub mod linalg;
pub mod polychaos;
pub mod pss;
pub mod quadrature;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
