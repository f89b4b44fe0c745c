use crate::config::{FoldSelection, RunConfig};
use crate::{write_resolved, RunContext};
use anyhow::Context;
use msmil::cache::{load_bag, CacheIndex};
use msmil::instances::{Bag, ClassSet};
use msmil::model::{Checkpoint, Model};
use msmil::training::{
    config_hash, evaluate, mean_std, patient_keys, train_val_test_split, MetricsReport, TrainConfig,
};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn check_classes(expected: &ClassSet, found: &ClassSet, what: &str) -> msmil::Result<()> {
    if expected != found {
        return Err(msmil::Error::ClassSetMismatch(format!(
            "{what}: expected {} classes {:?}, found {} classes {:?}",
            expected.len(),
            expected.names(),
            found.len(),
            found.names()
        )));
    }
    Ok(())
}

fn check_dim(bags: &[Bag], dim: usize) -> msmil::Result<()> {
    match bags.iter().find(|b| b.feature_dim() != dim) {
        Some(b) => Err(msmil::Error::Config(format!(
            "slide {} has {}-dim features but the model expects {dim}; set model.dim or re-run prepare",
            b.slide_id,
            b.feature_dim()
        ))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct Summary {
    macro_auc_mean: f64,
    macro_auc_std: f64,
    per_class_auc_mean: Vec<Option<f64>>,
    class_names: Vec<String>,
    lambda: f64,
    mask_ratio: f64,
    seed: u64,
    config_hash: String,
    /// False when the instance head got no training signal in any fold.
    instance_head_trained: bool,
    folds: Vec<MetricsReport>,
}

fn train_fold(
    bags: &[Bag],
    classes: &ClassSet,
    cfg: &RunConfig,
    fold: usize,
    hash: &str,
    out: &Path,
) -> anyhow::Result<MetricsReport> {
    let split = train_val_test_split(&patient_keys(bags), cfg.folds, fold, cfg.seed)?;
    let (tr, va, te) = split.partition(bags);
    let seed = cfg.seed.wrapping_add(fold as u64);
    log::info!(
        "fold {fold}: {} train, {} validation, {} test slides",
        tr.len(),
        va.len(),
        te.len()
    );
    let model = Model::new(cfg.model_for(classes.len()), seed)?;
    let tcfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let outcome = msmil::training::train(model, &tr, &va, &tcfg)?;
    let (auc, _) = evaluate(&outcome.model, &te).with_context(|| format!("fold {fold} test set"))?;

    let report = MetricsReport {
        fold,
        seed,
        config_hash: hash.into(),
        class_names: classes.names().to_vec(),
        per_class_auc: auc.per_class,
        macro_auc: auc.macro_auc,
        best_epoch: outcome.best_epoch,
        train_losses: outcome.train_losses,
        val_losses: outcome.val_losses,
        instance_head_trained: outcome.instance_head_trained,
    };
    let ckpt_dir = out.join("checkpoints").join(format!("fold{fold}"));
    Checkpoint {
        model: outcome.model,
        classes: classes.clone(),
        step: outcome.optimizer_steps,
        instance_head_trained: outcome.instance_head_trained,
    }
    .save(&ckpt_dir)?;
    let test_ids: String = te.iter().map(|b| format!("{}\n", b.slide_id)).collect();
    std::fs::write(ckpt_dir.join("test_slides.txt"), test_ids)?;
    write_json(&out.join("folds").join(format!("fold{fold}.json")), &report)?;
    println!(
        "fold {fold}: macro AUC {:.4} (best epoch {}, {} epochs)",
        report.macro_auc,
        report.best_epoch,
        report.val_losses.len()
    );
    Ok(report)
}

fn run_one(bags: &[Bag], classes: &ClassSet, cfg: &RunConfig, out: &Path) -> anyhow::Result<Summary> {
    let resolved = write_resolved(out, cfg)?;
    let hash = config_hash(&resolved);
    let folds: Vec<usize> = match cfg.fold {
        FoldSelection::All => (0..cfg.folds).collect(),
        FoldSelection::One(f) => vec![f],
    };
    let reports = folds
        .iter()
        .map(|&f| train_fold(bags, classes, cfg, f, &hash, out))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let aucs: Vec<f64> = reports.iter().map(|r| r.macro_auc).collect();
    let (mean, std) = mean_std(&aucs);
    let per_class_auc_mean = (0..classes.len())
        .map(|c| {
            let v: Vec<f64> = reports.iter().filter_map(|r| r.per_class_auc[c]).collect();
            (!v.is_empty()).then(|| mean_std(&v).0)
        })
        .collect();
    let summary = Summary {
        macro_auc_mean: mean,
        macro_auc_std: std,
        per_class_auc_mean,
        class_names: classes.names().to_vec(),
        lambda: cfg.train.lambda,
        mask_ratio: cfg.train.mask_ratio,
        seed: cfg.seed,
        config_hash: hash,
        instance_head_trained: reports.iter().any(|r| r.instance_head_trained),
        folds: reports,
    };
    write_json(&out.join("metrics.json"), &summary)?;

    let mut table = String::new();
    for (name, auc) in summary.class_names.iter().zip(&summary.per_class_auc_mean) {
        match auc {
            Some(a) => write!(table, " {name} {a:.4}")?,
            None => write!(table, " {name} n/a")?,
        }
    }
    println!(
        "macro AUC {mean:.4}±{std:.4} over {} folds;{table}",
        summary.folds.len()
    );
    if !summary.instance_head_trained {
        println!("instance head untrained (slide-level supervision only)");
    }
    Ok(summary)
}

fn sweep_row(lambda: f64, mask: f64) -> String {
    if lambda >= 1.0 {
        "only slide label".into()
    } else {
        format!("masking {}%", mask * 100.0)
    }
}

pub fn train(ctx: &RunContext, cache: &Path) -> anyhow::Result<()> {
    let index = CacheIndex::load(cache).with_context(|| format!("cannot read bag cache {}", cache.display()))?;
    let classes = &ctx.cfg.synth.classes;
    check_classes(classes, &index.classes, "bag cache")?;
    if index.config_hash != ctx.cfg.prepare_hash() {
        log::warn!("bag cache was prepared with different prepare settings");
    }
    let bags = index.load_bags(cache)?;
    check_dim(&bags, ctx.cfg.model.dim)?;
    // splits are checked up front so a bad fold count fails before training
    for f in 0..ctx.cfg.folds {
        train_val_test_split(&patient_keys(&bags), ctx.cfg.folds, f, ctx.cfg.seed)?;
    }

    if ctx.sweep.len() == 1 {
        run_one(&bags, classes, &ctx.cfg, &ctx.out)?;
        return Ok(());
    }
    let multi_lambda = ctx.sweep.iter().any(|&(l, _)| l != ctx.sweep[0].0);
    let mut csv = String::from("setting,lambda,mask_ratio,macro_auc_mean,macro_auc_std\n");
    for &(lambda, mask) in &ctx.sweep {
        let mut cfg = ctx.cfg.clone();
        cfg.train.lambda = lambda;
        cfg.train.mask_ratio = mask;
        let dir = if multi_lambda {
            ctx.out.join(format!("lambda_{lambda}_mask_{mask}"))
        } else {
            ctx.out.join(format!("mask_{mask}"))
        };
        println!("== lambda {lambda}, mask ratio {mask}");
        let s = run_one(&bags, classes, &cfg, &dir)?;
        writeln!(
            csv,
            "{},{lambda},{mask},{:.6},{:.6}",
            sweep_row(lambda, mask),
            s.macro_auc_mean,
            s.macro_auc_std
        )?;
    }
    let path = ctx.out.join("table2.csv");
    std::fs::write(&path, csv).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_checkpoint_and_cache(checkpoint: &Path, cache: &Path) -> anyhow::Result<(Checkpoint, CacheIndex)> {
    let ckpt =
        Checkpoint::load(checkpoint).with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    let index = CacheIndex::load(cache).with_context(|| format!("cannot read bag cache {}", cache.display()))?;
    check_classes(&ckpt.classes, &index.classes, "bag cache vs checkpoint")?;
    Ok((ckpt, index))
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: String,
    slides: usize,
    class_names: Vec<String>,
    per_class_auc: Vec<Option<f64>>,
    macro_auc: f64,
}

pub fn eval(ctx: &RunContext, checkpoint: &Path, cache: &Path, subset: Option<&Path>) -> anyhow::Result<()> {
    let (ckpt, index) = load_checkpoint_and_cache(checkpoint, cache)?;
    let ids: Vec<String> = match subset {
        Some(p) => std::fs::read_to_string(p)
            .with_context(|| format!("cannot read {}", p.display()))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect(),
        None => index.slides.clone(),
    };
    let bags = ids
        .iter()
        .map(|id| load_bag(cache, id))
        .collect::<msmil::Result<Vec<_>>>()?;
    check_dim(&bags, ckpt.model.config().dim)?;
    let (auc, _) = evaluate(&ckpt.model, &bags)?;
    let report = EvalReport {
        checkpoint: checkpoint.display().to_string(),
        slides: bags.len(),
        class_names: ckpt.classes.names().to_vec(),
        per_class_auc: auc.per_class.clone(),
        macro_auc: auc.macro_auc,
    };
    write_json(&ctx.out.join("eval.json"), &report)?;
    for c in auc.undefined_classes() {
        log::warn!(
            "class {} has a single label value in this set; left out of the macro average",
            ckpt.classes.name(c)
        );
    }
    println!("eval: {} slides, macro AUC {:.6}", bags.len(), auc.macro_auc);
    Ok(())
}

#[derive(Serialize)]
struct InstancePrediction {
    region_id: u32,
    centroid: (f64, f64),
    class: String,
    probs: Vec<f64>,
}

#[derive(Serialize)]
struct SlidePrediction {
    slide_id: String,
    slide_probs: Vec<f64>,
    /// Classes with probability at least 0.5.
    predicted: Vec<String>,
    instances: Vec<InstancePrediction>,
}

#[derive(Serialize)]
struct Predictions {
    class_names: Vec<String>,
    instance_head_trained: bool,
    slides: Vec<SlidePrediction>,
}

pub fn predict(ctx: &RunContext, checkpoint: &Path, cache: &Path) -> anyhow::Result<()> {
    let (ckpt, index) = load_checkpoint_and_cache(checkpoint, cache)?;
    let bags = index.load_bags(cache)?;
    check_dim(&bags, ckpt.model.config().dim)?;
    if !ckpt.instance_head_trained {
        log::warn!("checkpoint was trained on slide labels only; instance classes are not meaningful");
    }
    let names = ckpt.classes.names();
    let mut slides = Vec::with_capacity(bags.len());
    for b in &bags {
        let p = ckpt.model.predict(&b.features, &b.centroids)?;
        let instances = p
            .instance_classes()
            .into_iter()
            .zip(p.instance_probs.iter())
            .enumerate()
            .map(|(i, (c, probs))| InstancePrediction {
                region_id: b.region_ids[i],
                centroid: b.centroids[i],
                class: names[c].clone(),
                probs: probs.clone(),
            })
            .collect();
        slides.push(SlidePrediction {
            slide_id: b.slide_id.clone(),
            predicted: names
                .iter()
                .zip(&p.slide_probs)
                .filter(|(_, &q)| q >= 0.5)
                .map(|(n, _)| n.clone())
                .collect(),
            slide_probs: p.slide_probs,
            instances,
        });
    }
    let out = Predictions {
        class_names: names.to_vec(),
        instance_head_trained: ckpt.instance_head_trained,
        slides,
    };
    let path = ctx.out.join("predictions.json");
    write_json(&path, &out)?;
    println!("predict: {} slides, wrote {}", out.slides.len(), path.display());
    Ok(())
}
