//! Uncertainty-aware model-free object reconstruction and 6D pose backend.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (an allocator is required). File formats, the
//! experiment runner and the command line live in the `splatpose` crate.
//!
//! Modules:
//! - [`geometry`]: rigid/similarity transforms, cameras, point clouds, PCA
//!   scale recovery and ICP.
//! - [`diffusion`]: DDIM sampling with per-element variance propagation and
//!   Monte Carlo cross-covariance over a pluggable uncertain noise predictor.
//! - [`splat`]: isotropic Gaussian object field, CPU renderer, weighted
//!   mapping loss with analytic gradients, and the map optimizer.
//! - [`posegraph`]: keyframe graph with the gated robust geometric residual,
//!   solved by damped Gauss-Newton on a sparse Cholesky factorization.
//! - [`tracking`]: render-and-compare pose refinement, failure detection and
//!   relocalization.
//! - [`sim`]: synthetic scenes, diffusion priors, matcher and the evaluation
//!   metrics.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod image;
pub mod posegraph;
pub mod sim;
pub mod splat;
pub mod tracking;

pub use error::{Error, Result};
