//! Generalized Laplacian spectral inference.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod harness;
pub mod inference;
pub mod io;
pub mod laplacian;
pub mod model;
pub mod qve;
pub mod rng;
pub mod spectral;
pub mod util;

pub use error::{Error, Result};
