//! Synthetic slides with known pixel and slide labels.

pub mod config;
pub mod dataset;
pub mod generate;

pub use config::{SynthConfig, Texture};
pub use dataset::{
    generate_dataset, generate_slides, instance_purity, manifest, slide_ids, slide_rng, write_dataset, SynthDataset,
};
pub use generate::{generate_slide, SynthSlide};
