//! Pixel value types and raster/morphology primitives.

mod geometry;
mod mask;
pub mod morphology;
mod raster;
mod resample;

pub use geometry::PlacementBox;
pub use mask::BinaryMask;
pub use morphology::{connected_components, dilate, fill_holes, Component, Components, Connectivity};
pub use raster::{Channels, RasterImage};
pub use resample::{resample, resample_mask, resample_with, Filter};
