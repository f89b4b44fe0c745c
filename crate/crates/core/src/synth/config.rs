use crate::error::{Error, Result};
use crate::instances::ClassSet;
use serde::{Deserialize, Serialize};

/// Appearance of one class: a sinusoidal stripe pattern over a base colour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub rgb: [f64; 3],
    /// Stripe frequency in cycles per pixel.
    pub frequency: f64,
    pub amplitude: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: ClassSet,
    pub palette: Vec<Texture>,
    /// Probability that a slide contains each class; empty draws are redrawn.
    pub class_prior: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// Side of a square grid cell in pixels.
    pub cell_size: usize,
    pub blank_prob: f64,
    pub blank_rgb: [f64; 3],
    pub blank_noise: f64,
    /// Fraction of tissue pixels whose recorded label is swapped for another class.
    pub label_noise: f64,
    pub slides_per_patient: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let tex = |rgb: [f64; 3], frequency: f64| Texture {
            rgb,
            frequency,
            amplitude: 28.0,
            noise: 14.0,
        };
        Self {
            classes: ClassSet::default(),
            palette: vec![
                tex([214.0, 150.0, 188.0], 0.030),
                tex([196.0, 128.0, 182.0], 0.055),
                tex([178.0, 110.0, 176.0], 0.085),
                tex([160.0, 96.0, 170.0], 0.120),
            ],
            class_prior: vec![0.5, 0.5, 0.4, 0.25],
            rows: 4,
            cols: 4,
            cell_size: 128,
            blank_prob: 0.1,
            blank_rgb: [244.0, 242.0, 245.0],
            blank_noise: 3.0,
            label_noise: 0.0,
            slides_per_patient: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn width(&self) -> usize {
        self.cols * self.cell_size
    }

    pub fn height(&self) -> usize {
        self.rows * self.cell_size
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.classes.len();
        if self.palette.len() != c || self.class_prior.len() != c {
            return Err(Error::Config(format!(
                "{c} classes but {} textures and {} prior entries",
                self.palette.len(),
                self.class_prior.len()
            )));
        }
        if self.rows == 0 || self.cols == 0 || self.cell_size == 0 || self.slides_per_patient == 0 {
            return Err(Error::Config(
                "grid, cell size and slides per patient must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::Config(format!(
                "label noise {} outside [0, 1)",
                self.label_noise
            )));
        }
        if !(0.0..=1.0).contains(&self.blank_prob) {
            return Err(Error::Config(format!(
                "blank probability {} outside [0, 1]",
                self.blank_prob
            )));
        }
        if self.class_prior.iter().any(|p| !(0.0..=1.0).contains(p)) || self.class_prior.iter().all(|&p| p == 0.0) {
            return Err(Error::Config(
                "class prior entries must lie in [0, 1], not all zero".into(),
            ));
        }
        if c > 255 {
            return Err(Error::Config("at most 255 classes fit an 8-bit label map".into()));
        }
        Ok(())
    }
}
