//! Spectral Galerkin construction of `K`-approximate periodic solutions for the
//! 1-D parabolic problem `u_t + L0 u + e(x,t) u = f`, and least-squares
//! identification of `e` and the free head coefficients from observations on a
//! subdomain.

// `!(x < y)` is used on purpose so that NaN lands in the error branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod cli;
pub mod error;
pub mod galerkin;
pub mod identify;
pub mod periodic;

pub use error::{Error, Result};
