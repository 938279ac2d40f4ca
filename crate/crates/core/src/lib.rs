//! Simulation and inference for fractional M/M/1 queues and fractional linear
//! birth-death processes.
//!
//! The fractional processes replace the time derivative in the Kolmogorov
//! forward equations with a Caputo derivative of order `alpha` in (0, 1].
//! Sojourn times become Mittag-Leffler distributed, which this crate uses for
//! path simulation ([`sim`]), closed-form transient probabilities
//! ([`transient`]) and moment-based estimation of `(alpha, lambda, mu)`
//! ([`estimate`]). [`harness`] drives Monte Carlo studies and the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod estimate;
pub mod harness;
pub mod rng;
pub mod sim;
pub mod specfun;
pub mod transient;

pub use error::{Error, Result};
