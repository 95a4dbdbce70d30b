//! Dynamical Wasserstein barycenter (DWB) models for univariate time series.
//!
//! A time series that drifts among a finite set of canonical behaviors is
//! modeled at each instant as a Wasserstein barycenter of per-state
//! distributions, weighted by a simplex-valued latent path. In one dimension
//! the barycenter has a closed form on quantile functions, so the model is
//! learned as a constrained least-squares problem over discrete quantile
//! vectors: sorted sample windows on one side, monotone pure-state columns
//! combined by the latent weights on the other, with smoothness and spread
//! regularizers tied together by the model's inverse-scaling non-uniqueness.
//!
//! Module map:
//! - [`ot`]: quantile vectors, 1-D squared Wasserstein distance, barycenters.
//! - [`dist`]: analytic reference distributions and normal special functions.
//! - [`regularizers`]: latent-path and pure-state penalties with gradients.
//! - [`solver`]: simplex/monotone projections and block-coordinate descent.
//! - [`init`]: window affinities, spectral clustering, initial iterates.
//! - [`model`]: windowing and end-to-end fits (non-parametric and Gaussian).
//! - [`simulate`]: ground-truth generation, window-size experiments, the
//!   inverse-scaling construction.
//! - [`eval`]: ground-truth/data-fit metrics and lambda grid search.

pub mod dist;
pub mod error;
pub mod eval;
pub mod init;
pub mod model;
pub mod ot;
pub mod regularizers;
pub mod simulate;
pub mod solver;

pub use error::{DwbError, Result};
