//! Exact vector soliton solutions of the focusing Manakov equation on the
//! half-line `x ≥ 0` with integrable boundary conditions.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod conservation;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod mirror;
pub mod spectral;
pub mod verification;

pub use error::{Error, Result};
