//! Bootstrap tests for high-dimensional mean vectors built on ℓp-norm statistics.
//!
//! The crate is organised bottom-up:
//!
//! * [`numcore`]: dense matrices, ℓp norms, symmetric eigendecomposition, PSD factors
//!   and operator norms.
//! * [`randgen`]: a seekable counter-based RNG, Gaussian / spherical / copula / t4
//!   samplers and the structured covariance designs.
//! * [`estimators`]: naive, thresholded, banded and self-normalized covariance
//!   estimates, each carrying a factor `Γ̂` with `Γ̂Γ̂' = Ω̂`.
//! * [`hdtest`]: test statistics, Gaussian / spherical / multiplier proxies,
//!   Monte-Carlo critical values, p-values and confidence sets.
//! * [`diagnostics`]: closed-form variance and quantile bounds and the sparse/dense
//!   classification of alternatives.
//! * [`simharness`]: reproducible size and power experiments.

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod hdtest;
pub mod numcore;
pub mod randgen;
pub mod simharness;

pub use error::{Error, Result};
pub use estimators::{CovMethod, CovModel, Hypothesis};
pub use numcore::{LpExponent, Matrix, OpNorm};
pub use randgen::{CovKind, DgpKind, RngStream};
