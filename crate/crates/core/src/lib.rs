// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod consts;
pub mod error;
pub mod greens;
pub mod hamiltonian;
pub mod materials;
pub mod parratt;
pub mod reflectivity;
pub mod spectral;
pub mod stack;
pub mod topology;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
