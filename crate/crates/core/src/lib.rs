//! Pivot-projection bounds on inner products and Euclidean distances, an
//! exact pivot-filtering linear-scan index built on them, and estimators for
//! the variance covered by random in-distribution projections.

// `!(x > 0.0)` deliberately treats NaN as failing the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataspace;
pub mod error;
pub mod index;
pub mod pivotframe;
pub mod spectral;

pub use error::{Error, Result};
