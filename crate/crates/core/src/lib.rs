//! Statistical model of received optical power under random air-bubble
//! obstruction, method-of-moments fitting of the mixed Dirac-Weibull law,
//! and performance of the composite bubble x Gamma-Gamma channel.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bubble;
pub mod channel;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod simulator;
pub mod specfun;

pub use error::{Error, Result};
