use super::config::{ClassWeighting, TrainConfig};
use super::losses::{instance_loss, inverse_frequency_weights, slide_loss, total_loss};
use super::mask::random_mask;
use super::metrics::{macro_auc, AucSummary};
use super::optimizer::Ranger;
use crate::error::{Error, Result};
use crate::instances::Bag;
use crate::model::{Mode, Model};
use crate::numerics::{ParamId, Tape, Tensor};
use crate::Rng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    pub slide: Vec<f64>,
    pub instance: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        Self {
            slide: vec![1.0; classes],
            instance: vec![1.0; classes],
        }
    }

    /// Slide weights from how many training slides carry each class,
    /// instance weights from the instance label counts.
    pub fn from_bags(bags: &[Bag], mode: ClassWeighting) -> Self {
        let classes = bags.first().map_or(0, Bag::class_count);
        if mode == ClassWeighting::Uniform {
            return Self::uniform(classes);
        }
        let mut slide = vec![0.0; classes];
        let mut inst = vec![0.0; classes];
        for b in bags {
            for (c, &y) in b.slide_label.iter().enumerate() {
                slide[c] += y as f64;
            }
            for &l in b.instance_labels.iter().flatten() {
                inst[l] += 1.0;
            }
        }
        Self {
            slide: inverse_frequency_weights(&slide),
            instance: inverse_frequency_weights(&inst),
        }
    }
}

/// Loss of one bag (or its visible part) under `mode`.
fn bag_loss(
    model: &Model,
    tape: &mut Tape,
    features: &Tensor,
    centroids: &[(f64, f64)],
    labels: Option<&[usize]>,
    slide_label: &[u8],
    weights: &ClassWeights,
    cfg: &TrainConfig,
    mode: Mode<'_>,
) -> Result<crate::numerics::Var> {
    let out = model.forward(tape, features, centroids, mode)?;
    let slide = slide_loss(tape, out.slide_logits, slide_label, &weights.slide)?;
    let inst = match labels {
        Some(l) if cfg.lambda < 1.0 => Some(instance_loss(
            tape,
            out.instance_logits,
            l,
            &weights.instance,
            cfg.reduction,
        )?),
        _ => None,
    };
    total_loss(tape, slide, inst, cfg.lambda)
}

/// Mean full-bag loss without dropout or masking.
pub fn validation_loss(model: &Model, bags: &[Bag], weights: &ClassWeights, cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for b in bags {
        let mut tape = Tape::new();
        let loss = bag_loss(
            model,
            &mut tape,
            &b.features,
            &b.centroids,
            b.instance_labels.as_deref(),
            &b.slide_label,
            weights,
            cfg,
            Mode::Eval,
        )?;
        total += tape.value(loss).item();
    }
    Ok(total / bags.len().max(1) as f64)
}

/// Slide probabilities and targets for every bag, then macro AUC.
pub fn evaluate(model: &Model, bags: &[Bag]) -> Result<(AucSummary, Vec<Vec<f64>>)> {
    let mut scores = Vec::with_capacity(bags.len());
    for b in bags {
        scores.push(model.predict(&b.features, &b.centroids)?.slide_probs);
    }
    let labels: Vec<Vec<u8>> = bags.iter().map(|b| b.slide_label.clone()).collect();
    Ok((macro_auc(&scores, &labels)?, scores))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: Model,
    pub best_epoch: usize,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub optimizer_steps: u64,
    /// False when no instance loss ever contributed (λ = 1 or no labels).
    pub instance_head_trained: bool,
}

fn accumulate(acc: &mut BTreeMap<ParamId, Tensor>, grads: BTreeMap<ParamId, Tensor>) -> Result<()> {
    for (id, g) in grads {
        match acc.get_mut(&id) {
            Some(a) => a.axpy(1.0, &g)?,
            None => {
                acc.insert(id, g);
            }
        }
    }
    Ok(())
}

fn flush(opt: &mut Ranger, model: &mut Model, acc: &mut BTreeMap<ParamId, Tensor>, count: &mut usize) -> Result<()> {
    if *count == 0 {
        return Ok(());
    }
    let scale = 1.0 / *count as f64;
    for g in acc.values_mut() {
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    opt.step(model.params_mut(), acc)?;
    acc.clear();
    *count = 0;
    Ok(())
}

/// Trains with batch size 1, gradient accumulation and early stopping on
/// the validation loss. Everything random is drawn from one generator
/// seeded by `cfg.seed`, so runs are bitwise reproducible.
pub fn train(mut model: Model, train: &[Bag], val: &[Bag], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty splits, got {} training and {} validation bags",
            train.len(),
            val.len()
        )));
    }
    let weights = ClassWeights::from_bags(train, cfg.class_weights);
    let instance_head_trained = cfg.lambda < 1.0 && train.iter().any(|b| b.instance_labels.is_some());
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut opt = Ranger::new(model.params(), cfg.learning_rate, cfg.weight_decay);

    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut stale = 0usize;
    let (mut train_losses, mut val_losses) = (Vec::new(), Vec::new());
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut acc = BTreeMap::new();
        let mut count = 0usize;
        let mut epoch_loss = 0.0;
        for &i in &order {
            let bag = &train[i];
            let visible = random_mask(bag, cfg.mask_ratio, &mut rng);
            let mut tape = Tape::new();
            let loss = bag_loss(
                &model,
                &mut tape,
                &visible.features,
                &visible.centroids,
                visible.labels.as_deref(),
                &bag.slide_label,
                &weights,
                cfg,
                Mode::Train(&mut rng),
            )?;
            epoch_loss += tape.value(loss).item();
            accumulate(&mut acc, tape.backward(loss)?.into_params())?;
            count += 1;
            if count == cfg.accumulation {
                flush(&mut opt, &mut model, &mut acc, &mut count)?;
            }
        }
        flush(&mut opt, &mut model, &mut acc, &mut count)?;
        train_losses.push(epoch_loss / train.len() as f64);

        let v = validation_loss(&model, val, &weights, cfg)?;
        val_losses.push(v);
        log::debug!("epoch {epoch}: train {:.5} val {v:.5}", train_losses[epoch]);
        if v < best.0 {
            best = (v, model.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.1,
        best_epoch: best.2,
        train_losses,
        val_losses,
        optimizer_steps: opt.inner.steps(),
        instance_head_trained,
    })
}
