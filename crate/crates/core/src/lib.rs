//! Mixed-supervision multiple-instance learning for Gleason grading.
//!
//! Slides are segmented into superpixels, each superpixel becomes an
//! instance with a feature vector and (optionally) a majority-vote label,
//! and a class-token Transformer is trained jointly on slide-level and
//! instance-level targets with random instance masking.

pub mod cache;
pub mod dataset;
pub mod error;
pub mod instances;
pub mod model;
pub mod numerics;
pub mod prepare;
pub mod raster;
pub mod superpixel;
pub mod synth;
pub mod training;

pub use error::{Error, Result};

/// Seedable generator used for every random draw in the pipeline.
pub type Rng = rand_chacha::ChaCha8Rng;
