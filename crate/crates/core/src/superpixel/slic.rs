//! Simple linear iterative clustering in CIELAB + xy space.

use super::connectivity::enforce_connectivity;
use super::lab::rgb_to_lab;
use super::map::SuperpixelMap;
use crate::error::{Error, Result};
use crate::raster::ImageRgb;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    /// Requested number of regions.
    pub region_count: usize,
    pub compactness: f64,
    pub max_iter: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            region_count: 16,
            compactness: 10.0,
            max_iter: 10,
        }
    }
}

impl SlicParams {
    /// Region count for which the mean region covers `area` pixels.
    pub fn for_region_area(width: usize, height: usize, area: usize) -> Self {
        let k = ((width * height) as f64 / area as f64).round().max(1.0) as usize;
        Self {
            region_count: k,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// Segments `img` into roughly `params.region_count` compact regions.
pub fn slic(img: &ImageRgb, params: &SlicParams) -> Result<SuperpixelMap> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let k = params.region_count;
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "region count {k} outside 1..={n} for a {w}x{h} image"
        )));
    }
    if !(params.compactness.is_finite() && params.compactness > 0.0) {
        return Err(Error::Argument(format!(
            "compactness must be positive, got {}",
            params.compactness
        )));
    }
    let lab = rgb_to_lab(img);
    let step = (n as f64 / k as f64).sqrt();
    let mut centers = seed_centers(&lab, w, h, step);

    let radius = step.ceil() as isize;
    let spatial = (params.compactness / step).powi(2);
    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];

    for _ in 0..params.max_iter.max(1) {
        dist.fill(f64::INFINITY);
        let mut changed = false;
        for (ci, c) in centers.iter().enumerate() {
            let cx = c.x.round() as isize;
            let cy = c.y.round() as isize;
            let x_lo = (cx - radius).max(0) as usize;
            let x_hi = ((cx + radius) as usize).min(w - 1);
            let y_lo = (cy - radius).max(0) as usize;
            let y_hi = ((cy + radius) as usize).min(h - 1);
            for y in y_lo..=y_hi {
                let dy = y as f64 - c.y;
                for x in x_lo..=x_hi {
                    let p = y * w + x;
                    let [l, a, b] = lab[p];
                    let dc = (l - c.lab[0]).powi(2) + (a - c.lab[1]).powi(2) + (b - c.lab[2]).powi(2);
                    let dx = x as f64 - c.x;
                    // squared form of sqrt(d_lab^2 + (d_xy / S)^2 c^2)
                    let d = dc + (dx * dx + dy * dy) * spatial;
                    if d < dist[p] {
                        dist[p] = d;
                        if labels[p] != ci as u32 {
                            labels[p] = ci as u32;
                            changed = true;
                        }
                    }
                }
            }
        }
        // pixels outside every window fall back to the nearest centre
        for p in 0..n {
            if dist[p].is_infinite() {
                let (x, y) = ((p % w) as f64, (p / w) as f64);
                let nearest = centers
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, (c.x - x).powi(2) + (c.y - y).powi(2)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i as u32)
                    .expect("at least one centre");
                if labels[p] != nearest {
                    labels[p] = nearest;
                    changed = true;
                }
            }
        }
        update_centers(&mut centers, &labels, &lab, w);
        if !changed {
            break;
        }
    }

    let min_size = n / k / 4;
    enforce_connectivity(w, h, &labels, min_size)
}

/// Grid seeds moved to the lowest-gradient pixel of their 3x3 neighbourhood.
fn seed_centers(lab: &[[f64; 3]], w: usize, h: usize, step: f64) -> Vec<Center> {
    let cols = ((w as f64 / step).round() as usize).clamp(1, w);
    let rows = ((h as f64 / step).round() as usize).clamp(1, h);
    let perturb = step >= 3.0;
    let mut centers = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut x = (((c as f64 + 0.5) * w as f64 / cols as f64) as usize).min(w - 1);
            let mut y = (((r as f64 + 0.5) * h as f64 / rows as f64) as usize).min(h - 1);
            if perturb {
                let mut best = gradient(lab, w, h, x, y);
                let (ox, oy) = (x, y);
                for ny in oy.saturating_sub(1)..=(oy + 1).min(h - 1) {
                    for nx in ox.saturating_sub(1)..=(ox + 1).min(w - 1) {
                        let g = gradient(lab, w, h, nx, ny);
                        if g < best {
                            best = g;
                            x = nx;
                            y = ny;
                        }
                    }
                }
            }
            centers.push(Center {
                lab: lab[y * w + x],
                x: x as f64,
                y: y as f64,
            });
        }
    }
    centers
}

fn gradient(lab: &[[f64; 3]], w: usize, h: usize, x: usize, y: usize) -> f64 {
    let at = |x: usize, y: usize| lab[y * w + x];
    let sq = |a: [f64; 3], b: [f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
    let gx = sq(at((x + 1).min(w - 1), y), at(x.saturating_sub(1), y));
    let gy = sq(at(x, (y + 1).min(h - 1)), at(x, y.saturating_sub(1)));
    gx + gy
}

fn update_centers(centers: &mut [Center], labels: &[u32], lab: &[[f64; 3]], w: usize) {
    let mut acc = vec![[0.0f64; 6]; centers.len()];
    for (p, &l) in labels.iter().enumerate() {
        let a = &mut acc[l as usize];
        a[0] += lab[p][0];
        a[1] += lab[p][1];
        a[2] += lab[p][2];
        a[3] += (p % w) as f64;
        a[4] += (p / w) as f64;
        a[5] += 1.0;
    }
    for (c, a) in centers.iter_mut().zip(acc) {
        if a[5] > 0.0 {
            c.lab = [a[0] / a[5], a[1] / a[5], a[2] / a[5]];
            c.x = a[3] / a[5];
            c.y = a[4] / a[5];
        }
    }
}
