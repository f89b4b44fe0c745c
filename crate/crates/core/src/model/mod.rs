//! Positional encoding, class-token Transformer, slide and instance heads.

pub mod checkpoint;
pub mod config;
pub mod network;
pub mod position;

pub use checkpoint::{Checkpoint, CheckpointManifest};
pub use config::ModelConfig;
pub use network::{ForwardOutput, Mode, Model, Prediction};
pub use position::{add_pe, sinusoidal_pe};
