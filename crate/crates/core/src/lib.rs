//! Mean-field equilibria for linear-quadratic games whose agents observe
//! their plants through a threshold-scheduled, predictively encoded,
//! additive-Gaussian-noise link.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: static game data, validation, type sampling.
//! - [`config`]: the structured-text document format and its canonical form.
//! - [`kernels`]: Riccati, Stein and spectral-norm primitives.
//! - [`equilibrium`]: gains, contraction diagnostics, mean-field law and
//!   the equilibrium control policy.
//! - [`link`]: scheduler, encoder, channel and decoder for a single agent.
//! - [`sim`]: finite-population games, metrics, dual-effect probe and
//!   epsilon-Nash gap estimation.
//! - [`report`]: CSV emitters.

pub mod config;
pub mod equilibrium;
mod error;
pub mod kernels;
pub mod link;
pub mod model;
pub mod report;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
