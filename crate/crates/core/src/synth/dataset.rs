use super::config::SynthConfig;
use super::generate::{generate_slide, SynthSlide};
use crate::dataset::{DatasetManifest, SlideEntry, MANIFEST_FORMAT};
use crate::error::{Error, Result};
use crate::instances::{Bag, SlideIds};
use crate::prepare::{prepare_slide, PrepareConfig};
use crate::superpixel::SuperpixelMap;
use crate::Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use std::path::Path;

pub fn slide_ids(index: usize, cfg: &SynthConfig) -> SlideIds {
    SlideIds {
        slide_id: format!("slide_{index:04}"),
        patient_id: format!("patient_{:04}", index / cfg.slides_per_patient),
    }
}

/// Slide `index` depends only on the seed and its index, so slides can be
/// generated in any order or in parallel.
pub fn slide_rng(seed: u64, index: usize) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn generate_slides(n: usize, cfg: &SynthConfig) -> Result<Vec<SynthSlide>> {
    if n == 0 {
        return Err(Error::Config("dataset needs at least one slide".into()));
    }
    cfg.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| generate_slide(cfg, &mut slide_rng(cfg.seed, i)))
        .collect()
}

pub fn manifest(cfg: &SynthConfig, slides: &[SynthSlide]) -> Result<DatasetManifest> {
    let entries = slides
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ids = slide_ids(i, cfg);
            SlideEntry {
                image: format!("images/{}.png", ids.slide_id),
                labels: Some(format!("labels/{}.png", ids.slide_id)),
                truth: Some(format!("truth/{}.png", ids.slide_id)),
                slide_id: ids.slide_id,
                patient_id: ids.patient_id,
                slide_label: s.slide_label.clone(),
                cells: Some(s.cells.clone()),
            }
        })
        .collect();
    Ok(DatasetManifest {
        format: MANIFEST_FORMAT.into(),
        classes: cfg.classes.clone(),
        slides: entries,
        synth: Some(serde_json::to_value(cfg)?),
    })
}

pub fn write_dataset(dir: &Path, slides: &[SynthSlide], manifest: &DatasetManifest) -> Result<()> {
    for sub in ["images", "labels", "truth"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    slides
        .par_iter()
        .zip(&manifest.slides)
        .try_for_each(|(s, e)| -> Result<()> {
            s.image.save_png(&dir.join(&e.image))?;
            if let Some(l) = &e.labels {
                s.pixel_labels.save_png(&dir.join(l))?;
            }
            if let Some(t) = &e.truth {
                s.truth.save_png(&dir.join(t))?;
            }
            Ok(())
        })?;
    manifest.save(dir)
}

pub struct SynthDataset {
    pub slides: Vec<SynthSlide>,
    pub maps: Vec<SuperpixelMap>,
    pub bags: Vec<Bag>,
    pub manifest: DatasetManifest,
}

/// Generates `n` slides and turns each into a bag, in parallel.
pub fn generate_dataset(n: usize, cfg: &SynthConfig, prep: &PrepareConfig) -> Result<SynthDataset> {
    let slides = generate_slides(n, cfg)?;
    let manifest = manifest(cfg, &slides)?;
    let prepared: Vec<(SuperpixelMap, Bag)> = slides
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            prepare_slide(
                &s.image,
                Some(&s.pixel_labels),
                s.slide_label.clone(),
                &slide_ids(i, cfg),
                prep,
            )
        })
        .collect::<Result<_>>()?;
    let (maps, bags) = prepared.into_iter().unzip();
    Ok(SynthDataset {
        slides,
        maps,
        bags,
        manifest,
    })
}

/// Pixel-weighted fraction of instance pixels whose true class equals the
/// instance label.
pub fn instance_purity(slide: &SynthSlide, map: &SuperpixelMap, bag: &Bag) -> Option<f64> {
    let labels = bag.instance_labels.as_ref()?;
    let pixels = map.region_pixels();
    let (mut agree, mut total) = (0usize, 0usize);
    for (&r, &l) in bag.region_ids.iter().zip(labels) {
        for &p in &pixels[r as usize] {
            let t = slide.truth.labels()[p];
            if t != crate::raster::UNLABELLED {
                total += 1;
                agree += (t as usize == l) as usize;
            }
        }
    }
    (total > 0).then(|| agree as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::InstanceConfig;

    fn tiny() -> SynthConfig {
        SynthConfig {
            cell_size: 16,
            seed: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn manifest_is_deterministic() {
        let cfg = tiny();
        let a = manifest(&cfg, &generate_slides(100, &cfg).unwrap()).unwrap();
        let b = manifest(&cfg, &generate_slides(100, &cfg).unwrap()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.slides[3].patient_id, "patient_0001");
        let other = SynthConfig { seed: 6, ..cfg };
        let c = manifest(&other, &generate_slides(100, &other).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn slide_label_marginals() {
        let prior = [0.4, 0.3, 0.2, 0.1];
        let cfg = SynthConfig {
            class_prior: prior.to_vec(),
            cell_size: 4,
            blank_prob: 0.0,
            ..tiny()
        };
        let n = 4000;
        let slides = generate_slides(n, &cfg).unwrap();
        // presence is drawn independently and empty draws are redrawn, so the
        // expected marginal is the prior conditioned on a non-empty set
        let nonempty = 1.0 - prior.iter().map(|p| 1.0 - p).product::<f64>();
        for (c, p) in prior.iter().enumerate() {
            let freq = slides.iter().filter(|s| s.slide_label[c] == 1).count() as f64 / n as f64;
            assert!((freq - p / nonempty).abs() < 0.05, "class {c}: {freq}");
        }
    }

    #[test]
    fn clean_labels_follow_the_regions() {
        let cfg = SynthConfig {
            rows: 3,
            cols: 3,
            cell_size: 64,
            ..SynthConfig::default()
        };
        let prep = PrepareConfig {
            region_area: 32 * 32,
            // stripes pull low-compactness SLIC off the cell borders
            compactness: 30.0,
            instance: InstanceConfig {
                patch_size: 32,
                ..InstanceConfig::default()
            },
            ..PrepareConfig::default()
        };
        let data = generate_dataset(6, &cfg, &prep).unwrap();
        for ((s, m), b) in data.slides.iter().zip(&data.maps).zip(&data.bags) {
            let purity = instance_purity(s, m, b).unwrap();
            assert!(purity >= 0.95, "{purity}");
            assert_eq!(b.feature_dim(), 64);
        }
    }

    #[test]
    fn all_blank_slide_has_empty_bag() {
        let cfg = SynthConfig {
            blank_prob: 1.0,
            ..tiny()
        };
        let s = generate_slides(1, &cfg).unwrap().remove(0);
        let prep = PrepareConfig {
            region_area: 256,
            ..PrepareConfig::default()
        };
        let r = prepare_slide(
            &s.image,
            Some(&s.pixel_labels),
            s.slide_label,
            &slide_ids(0, &cfg),
            &prep,
        );
        assert!(matches!(r, Err(Error::EmptyBag)));
    }

    #[test]
    fn written_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let slides = generate_slides(3, &cfg).unwrap();
        let m = manifest(&cfg, &slides).unwrap();
        write_dataset(dir.path(), &slides, &m).unwrap();
        assert_eq!(DatasetManifest::load(dir.path()).unwrap(), m);
        let img = crate::raster::ImageRgb::load_png(&dir.path().join(&m.slides[1].image)).unwrap();
        assert_eq!(img, slides[1].image);
        let lab = crate::raster::LabelImage::load_png(&dir.path().join(m.slides[1].labels.as_ref().unwrap())).unwrap();
        assert_eq!(lab, slides[1].pixel_labels);
    }
}
