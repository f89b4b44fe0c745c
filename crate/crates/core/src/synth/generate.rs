use super::config::SynthConfig;
use crate::error::Result;
use crate::raster::{ImageRgb, LabelImage, UNLABELLED};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSlide {
    pub image: ImageRgb,
    /// Recorded pixel labels, after label noise.
    pub pixel_labels: LabelImage,
    /// Generated pixel classes before noise.
    pub truth: LabelImage,
    /// Union of the classes placed in the grid.
    pub slide_label: Vec<u8>,
    /// Row-major class of each grid cell; `None` is blank.
    pub cells: Vec<Option<usize>>,
}

/// Independent per-class presence, redrawn until at least one class is present.
fn draw_classes<R: Rng + ?Sized>(prior: &[f64], rng: &mut R) -> Vec<usize> {
    loop {
        let set: Vec<usize> = (0..prior.len()).filter(|&c| rng.random::<f64>() < prior[c]).collect();
        if !set.is_empty() {
            return set;
        }
    }
}

fn layout<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Vec<Option<usize>> {
    let n = cfg.rows * cfg.cols;
    let present = draw_classes(&cfg.class_prior, rng);
    let tissue: Vec<usize> = loop {
        let t: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() >= cfg.blank_prob).collect();
        if !t.is_empty() || cfg.blank_prob >= 1.0 {
            break t;
        }
    };
    let mut cells = vec![None; n];
    let mut order = tissue;
    order.shuffle(rng);
    // every drawn class gets a cell while cells last; the rest pick uniformly
    for (k, &cell) in order.iter().enumerate() {
        cells[cell] = Some(match present.get(k) {
            Some(&c) => c,
            None => present[rng.random_range(0..present.len())],
        });
    }
    cells
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn generate_slide<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthSlide> {
    cfg.validate()?;
    let (w, h, cs) = (cfg.width(), cfg.height(), cfg.cell_size);
    let classes = cfg.classes.len();
    let cells = layout(cfg, rng);
    let mut image = ImageRgb::filled(w, h, [0, 0, 0]);
    let mut truth = vec![UNLABELLED; w * h];

    for (idx, cell) in cells.iter().enumerate() {
        let (x0, y0) = ((idx % cfg.cols) * cs, (idx / cfg.cols) * cs);
        match *cell {
            None => {
                let noise = Normal::new(0.0, cfg.blank_noise).expect("finite sigma");
                for y in y0..y0 + cs {
                    for x in x0..x0 + cs {
                        let rgb = cfg.blank_rgb.map(|c| clamp_u8(c + noise.sample(rng)));
                        image.set(x, y, rgb);
                    }
                }
            }
            Some(c) => {
                let tex = &cfg.palette[c];
                let noise = Normal::new(0.0, tex.noise).expect("finite sigma");
                let theta = rng.random::<f64>() * std::f64::consts::PI;
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                let (dx, dy) = (theta.cos(), theta.sin());
                for y in y0..y0 + cs {
                    for x in x0..x0 + cs {
                        let t = std::f64::consts::TAU * tex.frequency * (x as f64 * dx + y as f64 * dy) + phase;
                        let wave = tex.amplitude * t.sin();
                        let rgb = tex.rgb.map(|base| clamp_u8(base + wave + noise.sample(rng)));
                        image.set(x, y, rgb);
                        truth[y * w + x] = c as u8;
                    }
                }
            }
        }
    }

    let mut recorded = truth.clone();
    if cfg.label_noise > 0.0 && classes > 1 {
        for l in recorded.iter_mut().filter(|l| **l != UNLABELLED) {
            if rng.random::<f64>() < cfg.label_noise {
                // uniform over the other classes
                let mut other = rng.random_range(0..classes - 1) as u8;
                if other >= *l {
                    other += 1;
                }
                *l = other;
            }
        }
    }

    let mut slide_label = vec![0u8; classes];
    for c in cells.iter().flatten() {
        slide_label[*c] = 1;
    }
    Ok(SynthSlide {
        image,
        pixel_labels: LabelImage::new(w, h, recorded)?,
        truth: LabelImage::new(w, h, truth)?,
        slide_label,
        cells,
    })
}
