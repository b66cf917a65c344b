//! Pairwise 3D deformable image registration over a multi-scale wavelet
//! coefficient pyramid.

pub mod cli;
pub mod diffeo;
pub mod error;
pub mod io;
pub mod metrics;
pub mod optimizer;
pub mod pyramid;
pub mod similarity;
pub mod synth;
pub mod volume;
pub mod wavelet;

pub use error::{Error, Result};
