//! Simulation engine for the nitrogen-vacancy center in diamond: excited-state
//! level structure, a ten-level Lindblad model with optical and microwave
//! drives, protocol-level experiment simulators, photonics calculators and the
//! estimators used to analyze their output.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod levels;
pub mod photonics;
pub mod rng;
pub mod spectrum;

pub use error::{Error, Result};
