//! Slide to bag: superpixels, then instance extraction.

use crate::error::Result;
use crate::instances::{build_bag, Bag, InstanceConfig, SlideIds};
use crate::raster::{ImageRgb, LabelImage};
use crate::superpixel::{slic, SlicParams, SuperpixelMap};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    /// Target mean superpixel area in pixels; sets SLIC's region count.
    pub region_area: usize,
    pub compactness: f64,
    pub max_iter: usize,
    pub instance: InstanceConfig,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            region_area: 224 * 224,
            compactness: 10.0,
            max_iter: 10,
            instance: InstanceConfig::default(),
        }
    }
}

impl PrepareConfig {
    pub fn slic_params(&self, width: usize, height: usize) -> SlicParams {
        SlicParams {
            compactness: self.compactness,
            max_iter: self.max_iter,
            ..SlicParams::for_region_area(width, height, self.region_area)
        }
    }
}

pub fn prepare_slide(
    img: &ImageRgb,
    pixel_labels: Option<&LabelImage>,
    slide_label: Vec<u8>,
    ids: &SlideIds,
    cfg: &PrepareConfig,
) -> Result<(SuperpixelMap, Bag)> {
    let map = slic(img, &cfg.slic_params(img.width(), img.height()))?;
    let bag = build_bag(img, &map, pixel_labels, slide_label, ids, &cfg.instance)?;
    Ok((map, bag))
}
