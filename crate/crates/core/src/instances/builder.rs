use super::bag::{validate_slide_label, Bag};
use super::features::{aggregate, extract_features};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::raster::{ImageRgb, LabelImage, UNLABELLED};
use crate::superpixel::{BBox, SuperpixelMap};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    /// A pixel is blank when its mean RGB exceeds this level.
    pub white_level: f64,
    /// Regions whose blank fraction exceeds this are dropped.
    pub tissue_threshold: f64,
    pub patch_size: usize,
    pub feature_dim: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            white_level: 230.0,
            tissue_threshold: 0.9,
            patch_size: 224,
            feature_dim: 64,
        }
    }
}

/// Region ids that are mostly tissue, in ascending order.
pub fn filter_blank(img: &ImageRgb, map: &SuperpixelMap, cfg: &InstanceConfig) -> Result<Vec<u32>> {
    check_cover(img, map)?;
    let mut blank = vec![0usize; map.region_count()];
    for (px, &l) in img.pixels().iter().zip(map.labels()) {
        let mean = (px[0] as f64 + px[1] as f64 + px[2] as f64) / 3.0;
        if mean > cfg.white_level {
            blank[l as usize] += 1;
        }
    }
    let kept: Vec<u32> = map
        .regions()
        .iter()
        .zip(&blank)
        .enumerate()
        .filter(|(_, (r, &b))| (b as f64 / r.pixel_count as f64) <= cfg.tissue_threshold)
        .map(|(i, _)| i as u32)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyBag);
    }
    Ok(kept)
}

fn check_cover(img: &ImageRgb, map: &SuperpixelMap) -> Result<()> {
    if img.width() != map.width() || img.height() != map.height() {
        return Err(Error::shape(
            "superpixel map",
            &[img.height(), img.width()],
            &[map.height(), map.width()],
        ));
    }
    Ok(())
}

/// Majority class of the labelled pixels; ties go to the more severe (higher)
/// class. Background pixels do not vote.
pub fn assign_instance_label(pixels: &[usize], labels: &LabelImage, class_count: usize) -> Result<usize> {
    let mut votes = vec![0usize; class_count];
    for &p in pixels {
        let raw = labels.labels()[p];
        if raw == UNLABELLED {
            continue;
        }
        let l = raw as usize;
        if l >= class_count {
            return Err(Error::Argument(format!(
                "pixel label {l} outside {class_count} classes"
            )));
        }
        votes[l] += 1;
    }
    if votes.iter().all(|&v| v == 0) {
        return Err(Error::Argument("region has no labelled pixels".into()));
    }
    let best = votes
        .iter()
        .enumerate()
        .max_by_key(|&(i, &v)| (v, i))
        .map(|(i, _)| i)
        .expect("non-empty class set");
    Ok(best)
}

/// Top-left corners of the patches cut from one region.
///
/// The first window is centred on the centroid; further windows tile the
/// bounding box with stride `patch_size` and are kept when their centre pixel
/// belongs to the region. Windows are clamped inside the image and exact
/// duplicates are dropped.
pub fn patch_windows(map: &SuperpixelMap, region: u32, patch_size: usize) -> Vec<(usize, usize)> {
    let (w, h) = (map.width(), map.height());
    let (pw, ph) = (patch_size.min(w), patch_size.min(h));
    let r = &map.regions()[region as usize];
    let clamp_x = |x: f64| (x.round().max(0.0) as usize).min(w - pw);
    let clamp_y = |y: f64| (y.round().max(0.0) as usize).min(h - ph);
    let half_w = (pw as f64 - 1.0) / 2.0;
    let half_h = (ph as f64 - 1.0) / 2.0;

    let mut windows = vec![(clamp_x(r.centroid.0 - half_w), clamp_y(r.centroid.1 - half_h))];
    let BBox { x0, y0, x1, y1 } = r.bbox;
    let mut gy = y0;
    while gy <= y1 {
        let mut gx = x0;
        while gx <= x1 {
            let cx = (gx + pw / 2).min(w - 1);
            let cy = (gy + ph / 2).min(h - 1);
            if map.label_at(cx, cy) == region {
                let win = (gx.min(w - pw), gy.min(h - ph));
                if !windows.contains(&win) {
                    windows.push(win);
                }
            }
            gx += patch_size;
        }
        gy += patch_size;
    }
    windows
}

pub fn crop_patches(img: &ImageRgb, map: &SuperpixelMap, region: u32, patch_size: usize) -> Vec<ImageRgb> {
    let (pw, ph) = (patch_size.min(img.width()), patch_size.min(img.height()));
    patch_windows(map, region, patch_size)
        .into_iter()
        .map(|(x, y)| img.crop(x, y, pw, ph))
        .collect()
}

/// Identifies the slide a bag is built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlideIds {
    pub slide_id: String,
    pub patient_id: String,
}

/// Blank filtering, per-region labels and centroids, patch features.
pub fn build_bag(
    img: &ImageRgb,
    map: &SuperpixelMap,
    pixel_labels: Option<&LabelImage>,
    slide_label: Vec<u8>,
    ids: &SlideIds,
    cfg: &InstanceConfig,
) -> Result<Bag> {
    let kept = filter_blank(img, map, cfg)?;
    validate_slide_label(&slide_label)?;
    if let Some(l) = pixel_labels {
        if l.width() != img.width() || l.height() != img.height() {
            return Err(Error::shape(
                "pixel labels",
                &[img.height(), img.width()],
                &[l.height(), l.width()],
            ));
        }
    }
    let pixels = map.region_pixels();
    let mut rows = Vec::with_capacity(kept.len());
    let mut centroids = Vec::with_capacity(kept.len());
    let mut labels = pixel_labels.map(|_| Vec::with_capacity(kept.len()));
    for &r in &kept {
        let patches = crop_patches(img, map, r, cfg.patch_size);
        let feats: Vec<Vec<f64>> = patches.iter().map(|p| extract_features(p, cfg.feature_dim)).collect();
        rows.push(aggregate(&feats));
        centroids.push(map.regions()[r as usize].centroid);
        if let (Some(out), Some(pl)) = (labels.as_mut(), pixel_labels) {
            out.push(assign_instance_label(&pixels[r as usize], pl, slide_label.len())?);
        }
    }
    let features = Tensor::from_rows(&rows)?;
    Bag::new(
        ids.slide_id.clone(),
        ids.patient_id.clone(),
        features,
        centroids,
        labels,
        slide_label,
        kept,
    )
}
