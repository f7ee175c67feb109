//! Simulation and verification of the time-rescaled primal-dual inertial
//! dynamics for linearly constrained convex minimization
//!
//! ```text
//! min f(x)  subject to  Ax = b
//! ```
//!
//! The second-order system
//!
//! ```text
//! x'' + (α/t) x' + δ(t) ∇ₓL_β(x, λ + θtλ')       = 0
//! λ'' + (α/t) λ' − δ(t) ∇_λL_β(x + θtx', λ)       = 0
//! ```
//!
//! is integrated as a first-order flow, and the Lyapunov energy, the rate
//! bounds and the integral estimates that hold along its trajectories are
//! evaluated sample by sample.
//!
//! The crate is `no_std` and only needs `alloc`. IO, configuration files and
//! the command line live in the `pdflow-cli` companion crate.
#![no_std]
// `!(a > b)` is used on purpose so that NaN takes the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod experiment;
pub mod integrate;
pub mod kkt;
pub mod problem;
pub mod scaling;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
