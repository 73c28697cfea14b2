pub mod distortion;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod nets;
pub mod patches;
pub mod stats;
pub mod train;

pub use error::{RanError, Result};
pub use image::ImagePlane;
