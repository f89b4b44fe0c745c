//! Per-slide bag cache written by `prepare`:
//!
//! ```text
//! <root>/cache.json
//! <root>/bags/<slide_id>/features.tensor   N×d instance features
//!                        centroids.csv     x,y per instance
//!                        labels.csv        region_id,label (label empty when unlabelled)
//!                        manifest.json     ids, slide label, config hash
//!                        segmentation.bin  superpixel ids (u32 LE) + .json sidecar
//!                        done              config hash, written last
//! ```

use crate::error::{Error, Result};
use crate::instances::{Bag, ClassSet};
use crate::numerics::{load_tensor, save_tensor, Dtype};
use crate::superpixel::export::{load_label_map, save_label_map};
use crate::superpixel::{SlicParams, SuperpixelMap};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CACHE_FORMAT: &str = "msmil-cache/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagManifest {
    pub slide_id: String,
    pub patient_id: String,
    pub slide_label: Vec<u8>,
    pub instances: usize,
    pub feature_dim: usize,
    pub has_instance_labels: bool,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub format: String,
    pub classes: ClassSet,
    pub config_hash: String,
    /// Slides with a complete bag, in manifest order.
    pub slides: Vec<String>,
    /// Slides skipped because nothing survived blank filtering.
    #[serde(default)]
    pub empty: Vec<String>,
}

pub fn bag_dir(root: &Path, slide_id: &str) -> PathBuf {
    root.join("bags").join(slide_id)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// True when the slide was completed under `config_hash`.
pub fn is_done(root: &Path, slide_id: &str, config_hash: &str) -> bool {
    read_text(&bag_dir(root, slide_id).join("done")).is_ok_and(|h| h.trim() == config_hash)
}

pub fn save_bag(root: &Path, bag: &Bag, map: &SuperpixelMap, slic: &SlicParams, config_hash: &str) -> Result<()> {
    let dir = bag_dir(root, &bag.slide_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let done = dir.join("done");
    if done.exists() {
        std::fs::remove_file(&done).map_err(|e| Error::io(&done, e))?;
    }
    save_tensor(&dir.join("features.tensor"), &bag.features, Dtype::F64)?;

    let mut centroids = String::from("x,y\n");
    for (x, y) in &bag.centroids {
        writeln!(centroids, "{x},{y}").expect("writing to a String");
    }
    write(&dir.join("centroids.csv"), centroids)?;

    let mut labels = String::from("region_id,label\n");
    for (i, r) in bag.region_ids.iter().enumerate() {
        match &bag.instance_labels {
            Some(l) => writeln!(labels, "{r},{}", l[i]),
            None => writeln!(labels, "{r},"),
        }
        .expect("writing to a String");
    }
    write(&dir.join("labels.csv"), labels)?;

    save_label_map(&dir, "segmentation", map, slic)?;
    let manifest = BagManifest {
        slide_id: bag.slide_id.clone(),
        patient_id: bag.patient_id.clone(),
        slide_label: bag.slide_label.clone(),
        instances: bag.len(),
        feature_dim: bag.feature_dim(),
        has_instance_labels: bag.instance_labels.is_some(),
        config_hash: config_hash.into(),
    };
    write(&dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    write(&done, config_hash)
}

fn csv_rows(path: &Path, columns: usize) -> Result<Vec<Vec<String>>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != columns {
            return Err(Error::format(
                path,
                format!("line {}: expected {columns} fields", n + 1),
            ));
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn parse<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(path, format!("cannot parse `{s}`")))
}

pub fn load_bag(root: &Path, slide_id: &str) -> Result<Bag> {
    let dir = bag_dir(root, slide_id);
    let mpath = dir.join("manifest.json");
    let m: BagManifest = serde_json::from_str(&read_text(&mpath)?)?;
    let features = load_tensor(&dir.join("features.tensor"))?;

    let cpath = dir.join("centroids.csv");
    let centroids = csv_rows(&cpath, 2)?
        .iter()
        .map(|r| Ok((parse(&cpath, &r[0])?, parse(&cpath, &r[1])?)))
        .collect::<Result<Vec<(f64, f64)>>>()?;

    let lpath = dir.join("labels.csv");
    let rows = csv_rows(&lpath, 2)?;
    let region_ids = rows
        .iter()
        .map(|r| parse(&lpath, &r[0]))
        .collect::<Result<Vec<u32>>>()?;
    let instance_labels = if m.has_instance_labels {
        Some(
            rows.iter()
                .map(|r| parse(&lpath, &r[1]))
                .collect::<Result<Vec<usize>>>()?,
        )
    } else {
        None
    };
    let bag = Bag::new(
        m.slide_id,
        m.patient_id,
        features,
        centroids,
        instance_labels,
        m.slide_label,
        region_ids,
    )?;
    if bag.len() != m.instances {
        return Err(Error::format(&mpath, "instance count disagrees with the cached files"));
    }
    Ok(bag)
}

/// The cached superpixel map, or an error telling the user to run `prepare`.
pub fn load_segmentation(root: &Path, slide_id: &str) -> Result<SuperpixelMap> {
    let dir = bag_dir(root, slide_id);
    if !dir.join("segmentation.bin").exists() {
        return Err(Error::Argument(format!(
            "no segmentation cached for slide `{slide_id}` under {}; run `msmil prepare` first",
            root.display()
        )));
    }
    Ok(load_label_map(&dir, "segmentation")?.0)
}

impl CacheIndex {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join("cache.json");
        let idx: Self = serde_json::from_str(&read_text(&path)?)?;
        if idx.format != CACHE_FORMAT {
            return Err(Error::format(&path, format!("unknown format `{}`", idx.format)));
        }
        Ok(idx)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        write(&root.join("cache.json"), serde_json::to_vec_pretty(self)?)
    }

    pub fn load_bags(&self, root: &Path) -> Result<Vec<Bag>> {
        self.slides.iter().map(|s| load_bag(root, s)).collect()
    }
}
