//! Numerical laboratory for one-phase Hele-Shaw flow in randomly perforated
//! planar domains, solved through its obstacle-problem formulation, together
//! with the homogenized model and potential-theoretic probes.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
// Cell loops index several parallel arrays by the same cell id.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod capacity;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod homogenization;
pub mod metrics;
pub mod obstacle;

pub use error::{Error, Result};
