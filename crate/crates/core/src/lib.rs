//! Surgical scene perception: tool tracking, stereo depth and tissue fusion.
//!
//! - [`geometry`]: rigid transforms, kinematic chains and feature projection.
//! - [`tracker`]: particle filter over the lumped hand-eye/joint error.
//! - [`stereo`]: SAD cost volumes, soft-argmin disparity and triangulation.
//! - [`fusion`]: tool-mask subtraction and surfel fusion of depth maps.
//! - [`metrics`]: tool-mask rendering and evaluation metrics.
//! - [`sim`]: synthetic scenes with ground truth.
//! - [`io`] and [`pipeline`]: file formats and the batch commands behind the CLI.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod stereo;
pub mod tracker;

pub use error::{Error, Result};
