//! Label-map files: raw `u32` little-endian ids plus a JSON sidecar, and a
//! boundary overlay for eyeballing segmentations.

use super::map::SuperpixelMap;
use super::slic::SlicParams;
use crate::error::{Error, Result};
use crate::raster::ImageRgb;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMapSidecar {
    pub height: usize,
    pub width: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "c")]
    pub compactness: f64,
}

/// Writes `<stem>.bin` and `<stem>.json` into `dir`.
pub fn save_label_map(dir: &Path, stem: &str, map: &SuperpixelMap, params: &SlicParams) -> Result<()> {
    let bin = dir.join(format!("{stem}.bin"));
    let mut bytes = Vec::with_capacity(map.labels().len() * 4);
    for &l in map.labels() {
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    std::fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let sidecar = LabelMapSidecar {
        height: map.height(),
        width: map.width(),
        k: params.region_count,
        compactness: params.compactness,
    };
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&json, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(&json, e))
}

pub fn load_label_map(dir: &Path, stem: &str) -> Result<(SuperpixelMap, LabelMapSidecar)> {
    let json = dir.join(format!("{stem}.json"));
    let raw = std::fs::read(&json).map_err(|e| Error::io(&json, e))?;
    let sidecar: LabelMapSidecar = serde_json::from_slice(&raw)?;
    let bin = dir.join(format!("{stem}.bin"));
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != sidecar.width * sidecar.height * 4 {
        return Err(Error::format(&bin, "size does not match sidecar dimensions"));
    }
    let labels = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    let map = SuperpixelMap::from_labels(sidecar.width, sidecar.height, labels)
        .map_err(|e| Error::format(&bin, e.to_string()))?;
    Ok((map, sidecar))
}

/// Copy of `img` with region boundaries painted in `color`.
pub fn boundary_overlay(img: &ImageRgb, map: &SuperpixelMap, color: [u8; 3]) -> ImageRgb {
    let mut out = img.clone();
    let (w, h) = (map.width(), map.height());
    for y in 0..h {
        for x in 0..w {
            let l = map.label_at(x, y);
            let edge = (x + 1 < w && map.label_at(x + 1, y) != l) || (y + 1 < h && map.label_at(x, y + 1) != l);
            if edge {
                out.set(x, y, color);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = SuperpixelMap::from_labels(3, 2, vec![0, 0, 1, 2, 2, 1]).unwrap();
        let params = SlicParams {
            region_count: 3,
            compactness: 12.5,
            max_iter: 4,
        };
        save_label_map(dir.path(), "seg", &map, &params).unwrap();
        let raw = std::fs::read(dir.path().join("seg.bin")).unwrap();
        assert_eq!(&raw[8..12], &1u32.to_le_bytes());
        let (back, sidecar) = load_label_map(dir.path(), "seg").unwrap();
        assert_eq!(back, map);
        assert_eq!(sidecar.k, 3);
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("seg.json")).unwrap()).unwrap();
        assert_eq!(json["c"], 12.5);
        assert_eq!(json["height"], 2);
    }

    #[test]
    fn overlay_marks_only_boundaries() {
        let img = ImageRgb::filled(4, 1, [0, 0, 0]);
        let map = SuperpixelMap::from_labels(4, 1, vec![0, 0, 1, 1]).unwrap();
        let out = boundary_overlay(&img, &map, [255, 0, 0]);
        assert_eq!(out.get(1, 0), [255, 0, 0]);
        assert_eq!(out.get(0, 0), [0, 0, 0]);
        assert_eq!(out.get(3, 0), [0, 0, 0]);
    }
}
