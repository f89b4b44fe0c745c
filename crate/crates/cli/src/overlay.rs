use crate::RunContext;
use anyhow::Context;
use msmil::cache::{load_bag, load_segmentation, CacheIndex};
use msmil::dataset::DatasetManifest;
use msmil::instances::{assign_instance_label, ClassSet};
use msmil::model::Checkpoint;
use msmil::raster::{ImageRgb, LabelImage, UNLABELLED};
use msmil::superpixel::SuperpixelMap;
use serde::Serialize;
use std::path::Path;

const PALETTE: [[u8; 3]; 8] = [
    [46, 160, 67],
    [230, 200, 40],
    [240, 130, 30],
    [210, 40, 40],
    [60, 110, 220],
    [150, 70, 200],
    [40, 190, 200],
    [120, 120, 120],
];
const ALPHA: f64 = 0.55;

pub fn class_color(c: usize) -> [u8; 3] {
    PALETTE[c % PALETTE.len()]
}

fn blend(px: [u8; 3], color: [u8; 3]) -> [u8; 3] {
    let mix = |a: u8, b: u8| (a as f64 * (1.0 - ALPHA) + b as f64 * ALPHA).round() as u8;
    [mix(px[0], color[0]), mix(px[1], color[1]), mix(px[2], color[2])]
}

/// Tints every region that has a class; others keep the slide pixels.
pub fn region_overlay(img: &ImageRgb, map: &SuperpixelMap, region_class: &[Option<usize>]) -> ImageRgb {
    let pixels = img
        .pixels()
        .iter()
        .zip(map.labels())
        .map(|(&px, &l)| match region_class[l as usize] {
            Some(c) => blend(px, class_color(c)),
            None => px,
        })
        .collect();
    ImageRgb::new(img.width(), img.height(), pixels).expect("same dimensions")
}

/// Tints each labelled pixel by its class.
pub fn label_overlay(img: &ImageRgb, labels: &LabelImage) -> ImageRgb {
    let pixels = img
        .pixels()
        .iter()
        .zip(labels.labels())
        .map(|(&px, &l)| {
            if l == UNLABELLED {
                px
            } else {
                blend(px, class_color(l as usize))
            }
        })
        .collect();
    ImageRgb::new(img.width(), img.height(), pixels).expect("same dimensions")
}

fn put(img: &mut ImageRgb, x: usize, y: usize, rgb: [u8; 3]) {
    if x < img.width() && y < img.height() {
        img.set(x, y, rgb);
    }
}

fn draw_text(img: &mut ImageRgb, x0: usize, y0: usize, text: &str, rgb: [u8; 3]) {
    for (i, ch) in text.chars().enumerate() {
        let glyph = font8x8::legacy::BASIC_LEGACY
            .get(ch as usize)
            .copied()
            .unwrap_or([0; 8]);
        for (dy, row) in glyph.iter().enumerate() {
            for dx in 0..8 {
                if row & (1 << dx) != 0 {
                    put(img, x0 + 8 * i + dx, y0 + dy, rgb);
                }
            }
        }
    }
}

/// Class legend boxed in the top-left corner, clipped to the image.
pub fn draw_legend(img: &mut ImageRgb, classes: &ClassSet) {
    let longest = classes.names().iter().map(|n| n.chars().count()).max().unwrap_or(0);
    let (w, h) = (20 + 8 * longest, 4 + 12 * classes.len());
    for y in 0..h {
        for x in 0..w {
            put(img, x, y, [255, 255, 255]);
        }
    }
    for (c, name) in classes.names().iter().enumerate() {
        let y = 4 + 12 * c;
        for dy in 0..8 {
            for dx in 0..8 {
                put(img, 4 + dx, y + dy, class_color(c));
            }
        }
        draw_text(img, 16, y, name, [0, 0, 0]);
    }
}

fn side_by_side(a: &ImageRgb, b: &ImageRgb) -> ImageRgb {
    let (w, h) = (a.width(), a.height());
    let mut out = ImageRgb::filled(2 * w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, a.get(x, y));
            out.set(w + x, y, b.get(x, y));
        }
    }
    out
}

#[derive(Serialize)]
struct OverlayReport {
    slide_id: String,
    instances: usize,
    instance_head_trained: bool,
    /// Fraction of regions whose predicted class is the majority truth class.
    agreement: Option<f64>,
}

pub fn visualize(ctx: &RunContext, checkpoint: &Path, cache: &Path, data: &Path, slide: &str) -> anyhow::Result<()> {
    let ckpt =
        Checkpoint::load(checkpoint).with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    let index = CacheIndex::load(cache).with_context(|| format!("cannot read bag cache {}", cache.display()))?;
    if index.classes != ckpt.classes {
        return Err(msmil::Error::ClassSetMismatch(format!(
            "checkpoint classes {:?}, bag cache classes {:?}",
            ckpt.classes.names(),
            index.classes.names()
        ))
        .into());
    }
    let map = load_segmentation(cache, slide)?;
    let bag = load_bag(cache, slide)?;
    let manifest = DatasetManifest::load(data)?;
    let entry = manifest
        .slides
        .iter()
        .find(|e| e.slide_id == slide)
        .with_context(|| format!("slide `{slide}` not in {}", data.display()))?;
    let img = ImageRgb::load_png(&data.join(&entry.image))?;
    if (img.width(), img.height()) != (map.width(), map.height()) {
        anyhow::bail!("cached segmentation does not match the image size of `{slide}`; re-run prepare");
    }
    if !ckpt.instance_head_trained {
        log::warn!("checkpoint was trained on slide labels only; instance classes are not meaningful");
    }

    let pred = ckpt.model.predict(&bag.features, &bag.centroids)?;
    let classes = pred.instance_classes();
    let mut region_class = vec![None; map.region_count()];
    for (&r, &c) in bag.region_ids.iter().zip(&classes) {
        region_class[r as usize] = Some(c);
    }
    let mut overlay = region_overlay(&img, &map, &region_class);
    draw_legend(&mut overlay, &ckpt.classes);

    let dir = ctx.out.join("overlays");
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(format!("{slide}.png"));
    overlay.save_png(&path)?;
    println!("wrote {}", path.display());

    let mut agreement = None;
    if let Some(truth_file) = entry.truth.as_ref().or(entry.labels.as_ref()) {
        let truth = LabelImage::load_png(&data.join(truth_file))?;
        let mut gt = label_overlay(&img, &truth);
        draw_legend(&mut gt, &ckpt.classes);
        let compare = dir.join(format!("{slide}_compare.png"));
        side_by_side(&overlay, &gt).save_png(&compare)?;
        println!("wrote {}", compare.display());

        let pixels = map.region_pixels();
        let mut agree = 0usize;
        let mut counted = 0usize;
        for (&r, &c) in bag.region_ids.iter().zip(&classes) {
            if let Ok(t) = assign_instance_label(&pixels[r as usize], &truth, ckpt.classes.len()) {
                counted += 1;
                agree += usize::from(t == c);
            }
        }
        agreement = (counted > 0).then(|| agree as f64 / counted as f64);
        if let Some(a) = agreement {
            println!("region agreement with ground truth: {a:.4} over {counted} regions");
        }
    }
    let report = OverlayReport {
        slide_id: slide.into(),
        instances: bag.len(),
        instance_head_trained: ckpt.instance_head_trained,
        agreement,
    };
    let json = dir.join(format!("{slide}.json"));
    std::fs::write(&json, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("cannot write {}", json.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_region_gets_one_colour() {
        let img = ImageRgb::filled(6, 4, [100, 100, 100]);
        let map = SuperpixelMap::from_labels(6, 4, vec![0; 24]).unwrap();
        let out = region_overlay(&img, &map, &[Some(2)]);
        let first = out.pixels()[0];
        assert!(out.pixels().iter().all(|&p| p == first));
        assert_eq!(first, blend([100, 100, 100], class_color(2)));
    }

    #[test]
    fn untinted_regions_keep_pixels() {
        let img = ImageRgb::filled(4, 1, [9, 8, 7]);
        let map = SuperpixelMap::from_labels(4, 1, vec![0, 0, 1, 1]).unwrap();
        let out = region_overlay(&img, &map, &[None, Some(0)]);
        assert_eq!(out.get(0, 0), [9, 8, 7]);
        assert_ne!(out.get(3, 0), [9, 8, 7]);
    }

    #[test]
    fn legend_writes_glyphs_and_clips() {
        let classes = ClassSet::default();
        let mut big = ImageRgb::filled(64, 64, [0, 0, 255]);
        draw_legend(&mut big, &classes);
        // swatch of the first class, then dark text pixels on the white box
        assert_eq!(big.get(5, 5), class_color(0));
        assert!(big.pixels()[..64 * 12].iter().any(|&p| p == [0, 0, 0]));
        let mut tiny = ImageRgb::filled(3, 3, [0, 0, 255]);
        draw_legend(&mut tiny, &classes);
    }
}
