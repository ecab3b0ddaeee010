//! Block-transform image codec with a learned recurrent decoder that refines
//! each patch over several steps, conditioned on neighbouring quantised blocks.
//!
//! Numerical code is generic over [`Scalar`]; the aliases below fix it to
//! `f64` (training, evaluation) or `f32`.

// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod numerics;
pub mod patching;
pub mod refinement;
mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = numerics::Matrix<f64>;
pub type Matrix32 = numerics::Matrix<f32>;
pub type Params64 = estimator::EstimatorParams<f64>;
pub type Params32 = estimator::EstimatorParams<f32>;
pub type Checkpoint64 = harness::Checkpoint<f64>;
