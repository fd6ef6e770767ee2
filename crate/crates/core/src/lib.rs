//! Mask-compliant hybrid precoding for multi-user MIMO-OFDM downlinks.
//!
//! The crate is organised around the blocks of an outer block-coordinate
//! descent loop:
//!
//! * [`admm`] solves the per-realization transmit problem (power, clipping and
//!   spectral-mask constraints) with a four-block ADMM,
//! * [`rf`] optimizes the partially-connected phase-shifter precoder,
//! * [`combiner`] updates the symbol-agnostic MMSE digital combiners and the
//!   unit-modulus analog combiners,
//! * [`bcd`] cycles the blocks and tracks the sum-MSE.
//!
//! [`spectral`], [`channel`] and [`model`] provide the simulation substrate,
//! [`metrics`] and [`baselines`] the reporting side, and [`experiments`] the
//! sweeps driven by the command-line tool.

pub mod admm;
pub mod baselines;
pub mod bcd;
pub mod channel;
pub mod combiner;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rf;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
