use super::config::ModelConfig;
use crate::error::{Error, Result};

/// 1-D sinusoidal embedding of `pos` into `len` values:
/// even slots `sin(pos / 10000^(2j/len))`, odd slots the matching cosine.
pub fn sinusoid(pos: f64, len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| {
            let j = (k / 2) as f64;
            let angle = pos / 10000f64.powf(2.0 * j / len as f64);
            if k % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

fn scaled(p: f64, cfg: &ModelConfig) -> f64 {
    let pos = p / cfg.pos_divisor;
    if !(0.0..=cfg.max_pos).contains(&pos) {
        log::warn!("position {pos} outside [0, {}], clamped", cfg.max_pos);
        return pos.clamp(0.0, cfg.max_pos);
    }
    pos
}

/// 2-D encoding of a centroid: height (row) half first, then width (column) half.
pub fn sinusoidal_pe(p_x: f64, p_y: f64, cfg: &ModelConfig) -> Vec<f64> {
    let half = cfg.dim / 2;
    let mut out = sinusoid(scaled(p_y, cfg), half);
    out.extend(sinusoid(scaled(p_x, cfg), half));
    out
}

/// `z + w * s`.
pub fn add_pe(z: &[f64], s: &[f64], w: f64) -> Result<Vec<f64>> {
    if z.len() != s.len() {
        return Err(Error::shape("add_pe", &[z.len()], &[s.len()]));
    }
    Ok(z.iter().zip(s).map(|(a, b)| a + w * b).collect())
}
