//! Neumann problems for the p-Laplacian on discrete metric measure spaces.
//!
//! A domain is a weighted graph with interior and boundary nodes. The
//! solver minimizes the discrete Neumann functional, and the analysis
//! module measures the level-set quantities of the De Giorgi method on
//! the result.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calculus;
pub mod cli;
pub mod domains;
pub mod error;
mod minimize;
pub mod report;
pub mod sampling;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
pub use minimize::Method;
