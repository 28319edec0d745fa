//! Predictive modular classification.
//!
//! A bank of predictors, one per class, is run over an observed signal; the
//! prediction errors drive an online credit recursion whose running argmax is
//! the classification. The same engine serves time series, plane curves
//! (through their curvature along arc length), image textures (through 2D
//! scanning stencils) and surfaces (through principal curvatures sampled on a
//! mesh that follows the lines of curvature).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curves;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod geom3d;
pub mod kdtree;
pub mod pose;
pub mod predictors;
pub mod repr;
pub mod scan2d;
pub mod synth;

pub use error::{Error, Result};
