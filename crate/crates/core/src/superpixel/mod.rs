//! SLIC superpixel segmentation with connectivity post-processing.

pub mod connectivity;
pub mod export;
pub mod lab;
pub mod map;
pub mod slic;

pub use connectivity::enforce_connectivity;
pub use lab::{rgb_to_lab, srgb_to_lab};
pub use map::{is_four_connected, BBox, Region, SuperpixelMap};
pub use slic::{slic, SlicParams};
