//! Survey-calibrated distributional random forests.
//!
//! Estimates the full conditional law `P(Y | X = x)` of a multivariate outcome
//! from complex-survey samples. Trees are grown on design-aware bootstrap
//! resamples with a Hájek-weighted MMD split criterion, leaves are populated
//! from a disjoint set of primary sampling units (PSU-level honesty), and every
//! prediction is a [`WeightedDistribution`] over the training outcomes from
//! which plug-in functionals (means, quantiles, covariances, tolerance regions)
//! are read off.
//!
//! Module map:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`kernel`] | Gaussian kernel, median heuristic, exact and Fourier-feature MMD |
//! | [`design`] | finite populations, sampling designs, Hájek estimation, CSV ingestion |
//! | [`bootstrap`] | pseudo-population bootstrap multipliers and the i.i.d. baseline |
//! | [`forest`] | honest MMD trees, ensemble fitting, aggregation weights, persistence |
//! | [`functionals`] | conditional moments, CDF, quantiles, Mahalanobis tolerance regions |
//! | [`sim`] | super-population generator and the design-aware vs naive benchmark |
//! | [`stats`] | small hypothesis-testing helpers used by the benchmark checks |

// NaN must fail these guards, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod design;
pub mod distribution;
pub mod error;
pub mod forest;
pub mod functionals;
pub mod kernel;
pub mod rng;
pub mod sim;
pub mod stats;

pub use distribution::WeightedDistribution;
pub use error::{Error, Result};
