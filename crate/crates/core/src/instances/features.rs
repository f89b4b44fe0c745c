//! Hand-crafted patch descriptor.
//!
//! Layout before resizing to the configured dimension:
//! `[R hist(16) | G hist(16) | B hist(16) | mean/std per channel (6) | luminance gradient orientation (8)]`.

use crate::raster::ImageRgb;

pub const COLOR_BINS: usize = 16;
pub const ORIENTATION_BINS: usize = 8;
pub const BASE_DIM: usize = 3 * COLOR_BINS + 6 + ORIENTATION_BINS;

/// The 62-value descriptor, before resizing and normalisation.
pub fn raw_descriptor(patch: &ImageRgb) -> [f64; BASE_DIM] {
    let (w, h) = (patch.width(), patch.height());
    let n = (w * h) as f64;
    let mut out = [0.0; BASE_DIM];

    let mut sum = [0.0f64; 3];
    for px in patch.pixels() {
        for c in 0..3 {
            let v = px[c] as usize;
            out[c * COLOR_BINS + v * COLOR_BINS / 256] += 1.0;
            sum[c] += px[c] as f64 / 255.0;
        }
    }
    let mean = sum.map(|s| s / n);
    let mut sq_dev = [0.0f64; 3];
    for px in patch.pixels() {
        for c in 0..3 {
            let d = px[c] as f64 / 255.0 - mean[c];
            sq_dev[c] += d * d;
        }
    }
    for v in &mut out[..3 * COLOR_BINS] {
        *v /= n;
    }
    let stats = 3 * COLOR_BINS;
    for c in 0..3 {
        out[stats + 2 * c] = mean[c];
        out[stats + 2 * c + 1] = (sq_dev[c] / n).sqrt();
    }

    // magnitude-weighted, unsigned orientation in [0, pi), averaged per pixel
    let lum: Vec<f64> = patch
        .pixels()
        .iter()
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
        .collect();
    let orient = stats + 6;
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let gx = 0.5 * (lum[y * w + x + 1] - lum[y * w + x - 1]);
                let gy = 0.5 * (lum[(y + 1) * w + x] - lum[(y - 1) * w + x]);
                let mag = (gx * gx + gy * gy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let angle = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
                let bin = ((angle / std::f64::consts::PI * ORIENTATION_BINS as f64) as usize).min(ORIENTATION_BINS - 1);
                out[orient + bin] += mag;
            }
        }
        let interior = ((w - 2) * (h - 2)) as f64;
        for v in &mut out[orient..] {
            *v /= interior;
        }
    }
    out
}

/// Resizes the raw descriptor to `dim` (tiling when larger, folding by index
/// modulo `dim` when smaller) and scales it to unit L2 norm.
pub fn extract_features(patch: &ImageRgb, dim: usize) -> Vec<f64> {
    assert!(dim > 0, "feature dimension must be positive");
    let raw = raw_descriptor(patch);
    let mut out = vec![0.0; dim];
    if dim >= BASE_DIM {
        for (j, o) in out.iter_mut().enumerate() {
            *o = raw[j % BASE_DIM];
        }
    } else {
        for (i, v) in raw.iter().enumerate() {
            out[i % dim] += v;
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm > 0.0, "all-zero descriptor");
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// Arithmetic mean of equally sized vectors.
pub fn aggregate(features: &[Vec<f64>]) -> Vec<f64> {
    assert!(!features.is_empty(), "aggregate of no features");
    let mut out = vec![0.0; features[0].len()];
    for f in features {
        assert_eq!(f.len(), out.len(), "feature length mismatch");
        for (o, v) in out.iter_mut().zip(f) {
            *o += v;
        }
    }
    let n = features.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
