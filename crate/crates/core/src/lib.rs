//! Residual model learning between a base kinematic model and a reference
//! system.
//!
//! A small leaky-ReLU network predicts an additive velocity correction on top
//! of a kinematic model. Its weights are tuned online by an unscented Kalman
//! filter update law that treats the flattened weight vector as the filter
//! state and a horizon of stacked velocity predictions as the measurement.
//!
//! Modules:
//! - [`param_net`]: network layout, forward pass and parameter packing.
//! - [`ukf_tuner`]: sigma points, Kalman gain and parameter/covariance update.
//! - [`plants`]: differential-drive and 6-DOF arm base models, synthetic
//!   reference plants, trajectories and the recorded-stream CSV format.
//! - [`pipeline`]: residual chains, horizon history, measurement stacks,
//!   staged learning runs and metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err, clippy::large_enum_variant)]

pub mod error;
pub mod parallel;
pub mod param_net;
pub mod pipeline;
pub mod plants;
pub mod ukf_tuner;

pub use error::{Error, Result};
