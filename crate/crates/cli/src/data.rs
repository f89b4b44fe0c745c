use crate::{write_resolved, RunContext};
use anyhow::{bail, Context};
use msmil::cache::{bag_dir, is_done, save_bag, CacheIndex, CACHE_FORMAT};
use msmil::dataset::{DatasetManifest, SlideEntry};
use msmil::instances::SlideIds;
use msmil::prepare::prepare_slide;
use msmil::raster::{ImageRgb, LabelImage};
use msmil::synth::{generate_slides, manifest, write_dataset};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::path::Path;

pub fn synth(ctx: &RunContext) -> anyhow::Result<()> {
    let mut cfg = ctx.cfg.synth.clone();
    cfg.seed = ctx.cfg.seed;
    let slides = generate_slides(ctx.cfg.slides, &cfg)?;
    let m = manifest(&cfg, &slides)?;
    write_dataset(&ctx.out, &slides, &m).with_context(|| format!("cannot write dataset to {}", ctx.out.display()))?;
    write_resolved(&ctx.out, &ctx.cfg)?;

    let patients: BTreeSet<&str> = m.slides.iter().map(|s| s.patient_id.as_str()).collect();
    let counts: Vec<String> = (0..m.classes.len())
        .map(|c| {
            let n = m.slides.iter().filter(|s| s.slide_label[c] == 1).count();
            format!("{} {n}", m.classes.name(c))
        })
        .collect();
    println!(
        "synth: {} slides, {} patients, {}x{} px, slides per class: {}",
        m.slides.len(),
        patients.len(),
        cfg.width(),
        cfg.height(),
        counts.join(", ")
    );
    println!("wrote {}", ctx.out.join("manifest.json").display());
    Ok(())
}

enum Outcome {
    Cached,
    Computed(usize),
    Empty,
    Failed(String),
}

fn empty_marker(root: &Path, slide_id: &str) -> std::path::PathBuf {
    bag_dir(root, slide_id).join("empty")
}

fn prepare_one(ctx: &RunContext, data: &Path, entry: &SlideEntry, hash: &str) -> Outcome {
    let root = &ctx.out;
    if is_done(root, &entry.slide_id, hash) {
        return Outcome::Cached;
    }
    let marker = empty_marker(root, &entry.slide_id);
    if std::fs::read_to_string(&marker).is_ok_and(|h| h.trim() == hash) {
        return Outcome::Empty;
    }
    let run = || -> msmil::Result<Outcome> {
        let img = ImageRgb::load_png(&data.join(&entry.image))?;
        let labels = entry
            .labels
            .as_ref()
            .map(|l| LabelImage::load_png(&data.join(l)))
            .transpose()?;
        let ids = SlideIds {
            slide_id: entry.slide_id.clone(),
            patient_id: entry.patient_id.clone(),
        };
        match prepare_slide(&img, labels.as_ref(), entry.slide_label.clone(), &ids, &ctx.cfg.prepare) {
            Ok((map, bag)) => {
                let slic = ctx.cfg.prepare.slic_params(img.width(), img.height());
                save_bag(root, &bag, &map, &slic, hash)?;
                Ok(Outcome::Computed(bag.len()))
            }
            Err(msmil::Error::EmptyBag) => {
                let dir = bag_dir(root, &entry.slide_id);
                std::fs::create_dir_all(&dir)
                    .and_then(|()| std::fs::write(&marker, hash))
                    .map_err(|e| msmil::Error::Argument(format!("cannot write {}: {e}", marker.display())))?;
                Ok(Outcome::Empty)
            }
            Err(e) => Err(e),
        }
    };
    run().unwrap_or_else(|e| Outcome::Failed(e.to_string()))
}

pub fn prepare(ctx: &RunContext, data: &Path) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(data).with_context(|| format!("cannot read dataset {}", data.display()))?;
    let classes = &ctx.cfg.synth.classes;
    if &manifest.classes != classes {
        return Err(msmil::Error::ClassSetMismatch(format!(
            "dataset classes {:?}, config classes {:?}",
            manifest.classes.names(),
            classes.names()
        ))
        .into());
    }
    if ctx
        .out
        .canonicalize()
        .ok()
        .is_some_and(|o| data.canonicalize().is_ok_and(|d| d == o))
    {
        bail!("the cache directory must differ from the dataset directory");
    }
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("cannot create {}", ctx.out.display()))?;
    write_resolved(&ctx.out, &ctx.cfg)?;
    let hash = ctx.cfg.prepare_hash();

    let total = manifest.slides.len();
    let outcomes: Vec<Outcome> = manifest
        .slides
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let o = prepare_one(ctx, data, entry, &hash);
            match &o {
                Outcome::Cached => log::debug!("[{}/{total}] {}: cached", i + 1, entry.slide_id),
                Outcome::Computed(n) => log::info!("[{}/{total}] {}: {n} instances", i + 1, entry.slide_id),
                Outcome::Empty => log::warn!("[{}/{total}] {}: no tissue regions, skipped", i + 1, entry.slide_id),
                Outcome::Failed(e) => log::error!("[{}/{total}] {}: {e}", i + 1, entry.slide_id),
            }
            o
        })
        .collect();

    let mut index = CacheIndex {
        format: CACHE_FORMAT.into(),
        classes: classes.clone(),
        config_hash: hash,
        slides: Vec::new(),
        empty: Vec::new(),
    };
    let (mut computed, mut cached, mut failed) = (0, 0, Vec::new());
    for (entry, o) in manifest.slides.iter().zip(&outcomes) {
        match o {
            Outcome::Cached => {
                cached += 1;
                index.slides.push(entry.slide_id.clone());
            }
            Outcome::Computed(_) => {
                computed += 1;
                index.slides.push(entry.slide_id.clone());
            }
            Outcome::Empty => index.empty.push(entry.slide_id.clone()),
            Outcome::Failed(e) => failed.push(format!("{}: {e}", entry.slide_id)),
        }
    }
    index.save(&ctx.out)?;
    println!(
        "prepare: {computed} computed, {cached} cached, {} empty, {} failed",
        index.empty.len(),
        failed.len()
    );
    if !index.empty.is_empty() {
        log::warn!("{} slides had no tissue regions and were skipped", index.empty.len());
    }
    if !failed.is_empty() {
        log::warn!("{} slides failed and are missing from the cache", failed.len());
        if ctx.strict {
            bail!("{} slides failed to prepare; first: {}", failed.len(), failed[0]);
        }
    }
    if index.slides.is_empty() {
        bail!("no slide produced a bag");
    }
    Ok(())
}
