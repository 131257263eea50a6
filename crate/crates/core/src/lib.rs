//! Collaborative self-calibration of fully meshed ranging networks.
//!
//! Two calibration methods share one data model:
//! - [`cf`]: closed-form frame establishment and least-squares trilateration;
//! - [`grid`]: a grid-based Bayes filter that propagates reference
//!   uncertainty as weighted position hypotheses.
//!
//! [`sim`] generates synthetic LOS/NLOS datasets, [`io`] reads and writes the
//! dataset text format, and [`eval`] computes ranging and positioning metrics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cf;
pub mod config;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    node_ids, symmetrize, DistanceMatrix, EpochResult, FrameAssumptions, NetworkTruth, NodeId,
    Position2D, VisibilityMatrix,
};
