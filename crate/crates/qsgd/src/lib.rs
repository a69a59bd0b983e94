//! Streaming quantile estimation and online inference with constant
//! learning-rate SGD.
//!
//! The estimator follows the τ-quantile of a stream with a fixed step size,
//! which makes the iterate a Markov chain on a lattice rather than a
//! convergent sequence. This crate implements the full pipeline around that
//! fact:
//!
//! - [`sgd`] — the lattice state machine for τ = p/q, exact over any number
//!   of steps;
//! - [`kde`] — a one-pass recursive kernel density estimate of the sampling
//!   density at the quantile;
//! - [`inference`] — asymptotic-variance confidence intervals built from the
//!   density plug-in;
//! - [`oracle`] — exact truncated computation of the chain's stationary
//!   distribution, with numeric checkers for the balance equation, drift,
//!   moment/tail bounds and the Gaussian limit;
//! - [`dist`] — the sampling distributions used by the harness, with
//!   analytic CDFs and quantiles;
//! - [`experiments`] — the replicated coverage / MSE / normality harness
//!   behind the `qsgd` command-line tool.
//!
//! The guide under `book/` walks through the concepts; its code snippets are
//! compiled and run as doc-tests via the [`guide`] module.

pub mod dist;
pub mod error;
pub mod experiments;
pub mod guide;
pub mod inference;
pub mod kde;
pub mod oracle;
pub mod quantile;
pub mod rng;
pub mod sgd;
pub mod special;

pub use dist::Distribution;
pub use error::{Error, Result};
pub use inference::{confidence_interval, ConfidenceInterval};
pub use kde::{KdeState, Kernel, KernelKind};
pub use quantile::RationalQuantile;
pub use rng::SplitMix64;
pub use sgd::{SgdConfig, SgdState};
