//! Differentially private equivalence testing (DP-TOST).
//!
//! Two-sample equivalence tests for differences of binomial proportions and
//! bounded normal means when only Laplace-privatized summary statistics are
//! released. The sampling distribution of the difference estimator is
//! approximated by simulation-based moment matching, and equivalence is
//! declared when the percentile interval of the matched draws lies strictly
//! inside the margin `(-c0, c0)`.
//!
//! Module map:
//!
//! - [`stochastics`]: seedable, splittable random streams and noise samplers.
//! - [`privacy`]: clamping, global sensitivities and the additive Laplace mechanism.
//! - [`classic_tost`]: the non-private benchmark TOST (normal / Welch t reference).
//! - [`prop_match`]: closed-form matching for privatized proportions.
//! - [`mean_match`]: numerical matching of privatized clamped moments.
//! - [`optim`]: box-projected Nelder-Mead used by the mean matcher.
//! - [`inference`]: percentile intervals, decisions and the end-to-end drivers.
//! - [`simharness`]: size/power experiments and the ACTG175 emulation.
//! - [`cli`]: the `dp-tost` command-line front end.
//!
//! Noise is generated with ordinary IEEE floating point. Known floating-point
//! attacks on textbook Laplace samplers are not mitigated; this crate is a
//! statistical tool, not a hardened privacy runtime.

pub mod classic_tost;
pub mod cli;
pub mod error;
pub mod inference;
pub mod mean_match;
pub mod optim;
pub mod privacy;
pub mod prop_match;
pub mod simharness;
pub mod stochastics;

pub use error::{Error, Result};
