//! Liouville first-passage percolation on lattice rectangles.
//!
//! The crate bundles the exact random-walk kernels of a rectangle, a sampler
//! for the discrete Gaussian free field with its Markov decomposition, vertex
//! weighted shortest paths, penalized total variation of Brownian paths and a
//! desk-scale multiscale crossing construction that ties them together.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fpp;
pub mod geometry;
pub mod gff;
pub mod kernels;
pub mod io;
pub mod lattice;
pub mod par;
pub mod quad;
pub mod rng;
pub mod multiscale;
pub mod totalvar;

pub use error::{Error, Result};
