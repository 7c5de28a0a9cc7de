//! Simulation and numerical verification for a Brownian particle driven by
//! the mollified curl of the two-dimensional Gaussian free field in the
//! weak-coupling regime.
//!
//! The crate has two independent routes to the same quantities:
//!
//! * [`field`] and [`sde`] sample the random environment spectrally and
//!   integrate the particle SDE under the annealed law.
//! * [`analytic`] and [`resolvent`] evaluate the closed-form limits, the
//!   `G_j` recursion and the first-chaos resolvent integrals by quadrature.
//!
//! [`harness`] ties both together behind the `curlgff` command line tool.

pub mod analytic;
pub mod error;
pub mod exec;
pub mod field;
pub mod harness;
pub mod params;
pub mod quad;
pub mod resolvent;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use params::ModelParams;

/// Tool version embedded in every output file.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
