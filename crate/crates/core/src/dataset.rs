//! On-disk dataset layout: `images/`, `labels/` (optional per slide),
//! `truth/` (synthetic only) and `manifest.json`.

use crate::error::{Error, Result};
use crate::instances::ClassSet;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MANIFEST_FORMAT: &str = "msmil-dataset/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlideEntry {
    pub slide_id: String,
    pub patient_id: String,
    /// Paths relative to the dataset directory.
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    pub slide_label: Vec<u8>,
    /// Row-major class of each synthetic grid cell, `null` for blank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<Option<usize>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub classes: ClassSet,
    pub slides: Vec<SlideEntry>,
    /// Generator settings when the data is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<serde_json::Value>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = serde_json::from_slice(&raw)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::format(&path, format!("unknown format `{}`", m.format)));
        }
        for s in &m.slides {
            if s.slide_label.len() != m.classes.len() {
                return Err(Error::format(
                    &path,
                    format!(
                        "slide {} has {} label entries for {} classes",
                        s.slide_id,
                        s.slide_label.len(),
                        m.classes.len()
                    ),
                ));
            }
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
