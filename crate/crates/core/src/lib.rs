//! Sampled-data H-infinity design of digital filters.
//!
//! Continuous-time specifications are turned into finite-dimensional
//! discrete plants by fast-sample/fast-hold lifting, and FIR filters are
//! synthesized by convex minimax optimization over their taps with
//! bounded-real certificates for the resulting error norms.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod designers;
pub mod error;
pub mod lifting;
pub mod quantization;
pub mod sslib;
pub mod synthesis;

pub use error::{Error, Result};
