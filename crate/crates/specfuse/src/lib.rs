//! Dual-resolution compressive spectral imaging toolkit.
//!
//! Simulates a dual-arm coded-aperture spectral imager (a high-spatial,
//! coarse-spectral arm and a low-spatial, rich-spectral arm), fuses
//! classification features directly from the compressive measurements by
//! solving an L1 + TV regularized inverse problem with an accelerated ADMM,
//! and classifies the fused features per pixel with a multilayer perceptron,
//! reporting overall accuracy, average accuracy, and the kappa statistic.

pub mod aperture;
pub mod classifier;
pub mod config;
pub mod cube;
pub mod error;
pub mod io;
pub mod operators;
pub mod pipeline;
pub mod scene;
pub mod sensing;
pub mod solver;

pub use error::{Error, Result};
