//! Diffusion maps with a neural reconstruction error for picking
//! informative components, plus a PCA baseline.

pub mod cli;
pub mod datasets;
pub mod eigen;
pub mod error;
pub mod graph;
pub mod io;
pub mod nre;
pub mod pca;
pub mod seed;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
