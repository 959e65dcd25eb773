//! Fluctuation theory for spectrally negative Lévy processes killed at an
//! independent exponential time, together with a Monte Carlo engine that
//! checks every analytic law against simulated paths.
//!
//! The layers, bottom up:
//!
//! - [`levy_model`]: the model catalog, Laplace exponent `ψ`, its right
//!   inverse `Φ` and the Esscher tilt.
//! - [`scale`]: the `γ`-scale functions `W` and `Z` (closed form for Brownian
//!   motion, Euler-summation Bromwich inversion otherwise).
//! - [`fluctuation`]: exit problems, joint law of the extremes, the
//!   path-decomposition `h`-functions and the conditional laws built on them.
//! - [`simulator`]: killed path simulation, extremes, decompositions and the
//!   post-infimum SDE.
//! - [`harness`]: named verification experiments and their CSV reports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fluctuation;
pub mod harness;
pub mod levy_model;
pub mod scale;
pub mod simulator;

pub use error::{Error, Result};
pub use fluctuation::Window;
pub use levy_model::{JumpSpec, KillingRate, LevyModel};
pub use scale::{ScaleEvaluator, ScaleMethod};
