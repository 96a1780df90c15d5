//! Composite neural control barrier functions for navigation among moving
//! obstacles.
//!
//! The pipeline has four stages, each in its own module:
//!
//! 1. [`dynamics`] defines the robot, obstacle and relative dynamics for a
//!    kinematic unicycle and a planar double integrator.
//! 2. [`hj`] solves the Hamilton-Jacobi-Isaacs variational inequality on a
//!    4D grid to obtain the converged avoid value function `V(z)`.
//! 3. [`net`] and [`train`] fit a residual network `r(z) > 0` so that the
//!    learned barrier `ℓ(z) - r(z)` tracks `V(z)` while never admitting a
//!    failure state.
//! 4. [`composite`] and [`filter`] combine the per-obstacle barriers with a
//!    log-sum-exp smooth minimum and enforce the result in a CBF-QP.
//!
//! [`sim`] closes the loop with a deterministic crowd-navigation benchmark.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature; `std` only adds data-parallel sweeps and runtime SIMD dispatch.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod composite;
pub mod contour;
pub mod dynamics;
mod error;
pub mod filter;
pub mod grid;
pub mod hj;
pub mod math;
pub mod net;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
