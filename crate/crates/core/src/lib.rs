//! Multivariate time-series classification over discretized shapes.
//!
//! Series are cut into fixed-length segments, each segment is replaced by the
//! nearest cluster centroid of discriminative shapelets (a ShapeWord), and the
//! resulting token sentences at several scales feed per-scale convolutional
//! encoders trained with cross-entropy and a cross-scale contrastive term.

pub mod dataset;
pub mod diffcore;
pub mod discretize;
pub mod error;
pub mod kmeans;
pub mod model;
pub mod shapelets;
pub mod vocab;

pub use error::{Error, Result};
