//! Impulsive control of generalized AIMD rate dynamics.
//!
//! Users grow their rates as `dx/dt = a x^gamma` and a controller may cut a
//! rate to `b x` at any instant. The crate covers:
//!
//! - [`model`]: the growth law, impulses and exact integrals along a segment.
//! - [`relaxed`]: optimal threshold policies when capacity only binds on
//!   average, and the multiplier that prices it.
//! - [`sim`]: exact event-driven simulation of threshold and index policies.
//! - [`steady`]: the periodic regime of the index policy and its stability.
//! - [`experiments`]: population sweeps and trade-off curves.

pub mod eigen;
pub mod error;
pub mod experiments;
pub mod model;
pub mod relaxed;
pub mod sim;
pub mod steady;

pub use error::{Error, Result, ValidationError};
pub use model::{Scenario, SegmentIntegrals, UserParams};
