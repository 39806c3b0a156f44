//! Camera-aware defocus blur: thin-lens blur/depth conversion, Gaussian PSF
//! convolution, layered refocusing of RGB-D data, defocus blur calibration
//! from circle-grid photographs, and analytic depth-from-blur inversion.

pub mod calib;
pub mod config;
pub mod depth;
pub mod error;
pub mod optics;
pub mod psf;
pub mod raster;
pub mod render;
pub mod stats;

pub use error::{Error, Result};
