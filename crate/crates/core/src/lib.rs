//! Physics-consistent projections for spatiotemporal surrogates.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: periodic grids, FFTs, spectral derivatives, FLD1 files.
//! - [`projection`]: divergence-free (mass) and rotation-invariant (momentum) projections.
//! - [`solvers`]: Kuramoto–Sivashinsky, Kolmogorov flow and local-inertial flood solvers.
//! - [`surrogate`]: a small Fourier neural operator with hand-written gradients.
//! - [`consistency`]: consistency-model residual correction and ensembles.
//! - [`metrics`]: nRMSE, MSE, Pearson, divergence/momentum losses, CSI.
//! - [`cli`]: the `specproj` command-line front end.

pub mod cli;
pub mod config;
pub mod consistency;
pub mod error;
pub mod metrics;
pub mod projection;
pub mod rng;
pub mod solvers;
pub mod spectral;
pub mod surrogate;

pub use error::{Error, Result};
