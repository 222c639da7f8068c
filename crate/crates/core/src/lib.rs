//! Graph-based semi-supervised learning on sampled manifolds.
//!
//! The crate builds ε-neighbourhood graph Laplacians from point clouds,
//! computes their low-lying eigenpairs, samples truncated Matérn-type
//! Gaussian fields from them and runs Bayesian posterior inference for
//! regression and binary classification. A reproducible experiment harness
//! measures how the discrete objects approach their continuum counterparts
//! on manifolds with closed-form spectra.

pub mod error;
pub mod geometry;
pub mod graph;
pub mod harness;
pub mod io;
pub mod posterior;
pub mod randomfield;
mod spatial;
pub mod spectral;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
