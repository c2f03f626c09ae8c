//! Simulated decoder.

pub mod binarize;
pub mod errors;
pub mod geometry;
pub mod locate;
pub mod sampling;

pub use binarize::{binarize, Ternary, TernaryImage};
pub use errors::{block_errors, count_errors, ErrorReport};
pub use geometry::{render, GridGeometry};
pub use locate::{extract_located, locate_finder, Homography, Location, Orientation, Point, MIN_MODULE_PX, READOUT_SIGMA};
pub use sampling::{extract_modules, gaussian_sample, sample_modules, GaussianKernel};

pub use crate::qr::decode_message;
pub use crate::raster::luminance;
