//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys are errors.

use msmil::instances::{ClassSet, InstanceConfig};
use msmil::model::ModelConfig;
use msmil::prepare::PrepareConfig;
use msmil::synth::{SynthConfig, Texture};
use msmil::training::{ClassWeighting, Reduction, TrainConfig};
use std::fmt;
use std::path::Path;

/// A problem with flags or config contents; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

/// Which folds `train` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldSelection {
    All,
    One(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub slides: usize,
    pub synth: SynthConfig,
    pub prepare: PrepareConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub folds: usize,
    pub fold: FoldSelection,
}

/// Defaults tuned for the synthetic slides: 512×512 images, superpixels of
/// about 64×64 pixels and matching 64-pixel patches.
impl Default for RunConfig {
    fn default() -> Self {
        let classes = ClassSet::default();
        let mut model = ModelConfig::new(64, classes.len());
        model.heads = 4;
        Self {
            seed: 0,
            workers: 0,
            slides: 100,
            synth: SynthConfig::default(),
            prepare: PrepareConfig {
                region_area: 64 * 64,
                compactness: 30.0,
                max_iter: 10,
                instance: InstanceConfig {
                    patch_size: 64,
                    feature_dim: 64,
                    ..InstanceConfig::default()
                },
            },
            model,
            train: TrainConfig::default(),
            folds: 4,
            fold: FoldSelection::All,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, UsageError> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value `{value}` for key `{key}`")))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, UsageError> {
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        let v = value.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "workers" => self.workers = num(key, v)?,
            "classes" => {
                let names: Vec<&str> = v.split(',').map(str::trim).collect();
                self.synth.classes = ClassSet::new(names).map_err(|e| usage(format!("classes: {e}")))?;
                // a shorter class list drops the trailing textures and priors
                let n = self.synth.classes.len();
                self.synth.palette.truncate(n);
                self.synth.class_prior.truncate(n);
            }
            "synth.slides" => self.slides = num(key, v)?,
            "synth.rows" => self.synth.rows = num(key, v)?,
            "synth.cols" => self.synth.cols = num(key, v)?,
            "synth.cell_size" => self.synth.cell_size = num(key, v)?,
            "synth.blank_prob" => self.synth.blank_prob = num(key, v)?,
            "synth.blank_noise" => self.synth.blank_noise = num(key, v)?,
            "synth.blank_rgb" => {
                let rgb: Vec<f64> = list(key, v)?;
                self.synth.blank_rgb = rgb
                    .try_into()
                    .map_err(|_| usage("synth.blank_rgb needs three values"))?;
            }
            "synth.label_noise" => self.synth.label_noise = num(key, v)?,
            "synth.slides_per_patient" => self.synth.slides_per_patient = num(key, v)?,
            "synth.class_prior" => self.synth.class_prior = list(key, v)?,
            "prepare.region_area" => self.prepare.region_area = num(key, v)?,
            "prepare.compactness" => self.prepare.compactness = num(key, v)?,
            "prepare.max_iter" => self.prepare.max_iter = num(key, v)?,
            "prepare.patch_size" => self.prepare.instance.patch_size = num(key, v)?,
            "prepare.white_level" => self.prepare.instance.white_level = num(key, v)?,
            "prepare.tissue_threshold" => self.prepare.instance.tissue_threshold = num(key, v)?,
            "model.dim" => {
                self.model.dim = num(key, v)?;
                self.prepare.instance.feature_dim = self.model.dim;
            }
            "model.blocks" => self.model.blocks = num(key, v)?,
            "model.heads" => self.model.heads = num(key, v)?,
            "model.pos_weight" => self.model.pos_weight = num(key, v)?,
            "model.pos_divisor" => self.model.pos_divisor = num(key, v)?,
            "model.max_pos" => self.model.max_pos = num(key, v)?,
            "model.head_hidden" => self.model.head_hidden = num(key, v)?,
            "model.ffn_expansion" => self.model.ffn_expansion = num(key, v)?,
            "model.dropout" => self.model.dropout = num(key, v)?,
            "train.mask_ratio" => self.train.mask_ratio = num(key, v)?,
            "train.lambda" => self.train.lambda = num(key, v)?,
            "train.learning_rate" => self.train.learning_rate = num(key, v)?,
            "train.weight_decay" => self.train.weight_decay = num(key, v)?,
            "train.accumulation" => self.train.accumulation = num(key, v)?,
            "train.patience" => self.train.patience = num(key, v)?,
            "train.max_epochs" => self.train.max_epochs = num(key, v)?,
            "train.reduction" => {
                self.train.reduction = match v {
                    "mean" => Reduction::Mean,
                    "sum" => Reduction::Sum,
                    _ => return Err(usage(format!("train.reduction must be mean or sum, got `{v}`"))),
                }
            }
            "train.class_weights" => {
                self.train.class_weights = match v {
                    "uniform" => ClassWeighting::Uniform,
                    "inverse_frequency" => ClassWeighting::InverseFrequency,
                    _ => {
                        return Err(usage(format!(
                            "train.class_weights must be uniform or inverse_frequency, got `{v}`"
                        )))
                    }
                }
            }
            "train.folds" => self.folds = num(key, v)?,
            "train.fold" => {
                self.fold = match v {
                    "all" => FoldSelection::All,
                    _ => FoldSelection::One(num(key, v)?),
                }
            }
            _ => {
                let Some(index) = key.strip_prefix("synth.texture.") else {
                    return Err(usage(format!("unknown config key `{key}`")));
                };
                let i: usize = num(key, index).map_err(|_| usage(format!("unknown config key `{key}`")))?;
                let values: Vec<f64> = list(key, v)?;
                let [r, g, b, frequency, amplitude, noise] = values[..] else {
                    return Err(usage(format!("{key} needs r,g,b,frequency,amplitude,noise")));
                };
                if i >= self.synth.palette.len() {
                    self.synth.palette.resize(
                        i + 1,
                        Texture {
                            rgb: [0.0; 3],
                            frequency: 0.0,
                            amplitude: 0.0,
                            noise: 0.0,
                        },
                    );
                }
                self.synth.palette[i] = Texture {
                    rgb: [r, g, b],
                    frequency,
                    amplitude,
                    noise,
                };
            }
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), UsageError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Every key with its value, in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let s = &self.synth;
        let p = &self.prepare;
        let m = &self.model;
        let t = &self.train;
        let mut e: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("classes", s.classes.names().join(",")),
            ("synth.slides", self.slides.to_string()),
            ("synth.rows", s.rows.to_string()),
            ("synth.cols", s.cols.to_string()),
            ("synth.cell_size", s.cell_size.to_string()),
            ("synth.blank_prob", s.blank_prob.to_string()),
            ("synth.blank_noise", s.blank_noise.to_string()),
            ("synth.blank_rgb", join(&s.blank_rgb)),
            ("synth.label_noise", s.label_noise.to_string()),
            ("synth.slides_per_patient", s.slides_per_patient.to_string()),
            ("synth.class_prior", join(&s.class_prior)),
        ];
        let textures: Vec<(String, String)> = s
            .palette
            .iter()
            .enumerate()
            .map(|(i, tx)| {
                let v = [tx.rgb[0], tx.rgb[1], tx.rgb[2], tx.frequency, tx.amplitude, tx.noise];
                (format!("synth.texture.{i}"), join(&v))
            })
            .collect();
        let rest: Vec<(&str, String)> = vec![
            ("prepare.region_area", p.region_area.to_string()),
            ("prepare.compactness", p.compactness.to_string()),
            ("prepare.max_iter", p.max_iter.to_string()),
            ("prepare.patch_size", p.instance.patch_size.to_string()),
            ("prepare.white_level", p.instance.white_level.to_string()),
            ("prepare.tissue_threshold", p.instance.tissue_threshold.to_string()),
            ("model.dim", m.dim.to_string()),
            ("model.blocks", m.blocks.to_string()),
            ("model.heads", m.heads.to_string()),
            ("model.pos_weight", m.pos_weight.to_string()),
            ("model.pos_divisor", m.pos_divisor.to_string()),
            ("model.max_pos", m.max_pos.to_string()),
            ("model.head_hidden", m.head_hidden.to_string()),
            ("model.ffn_expansion", m.ffn_expansion.to_string()),
            ("model.dropout", m.dropout.to_string()),
            ("train.mask_ratio", t.mask_ratio.to_string()),
            ("train.lambda", t.lambda.to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
            ("train.accumulation", t.accumulation.to_string()),
            ("train.patience", t.patience.to_string()),
            ("train.max_epochs", t.max_epochs.to_string()),
            (
                "train.reduction",
                match t.reduction {
                    Reduction::Mean => "mean",
                    Reduction::Sum => "sum",
                }
                .to_string(),
            ),
            (
                "train.class_weights",
                match t.class_weights {
                    ClassWeighting::Uniform => "uniform",
                    ClassWeighting::InverseFrequency => "inverse_frequency",
                }
                .to_string(),
            ),
            ("train.folds", self.folds.to_string()),
            (
                "train.fold",
                match self.fold {
                    FoldSelection::All => "all".to_string(),
                    FoldSelection::One(f) => f.to_string(),
                },
            ),
        ];
        e.extend(rest);
        let mut out: Vec<(String, String)> = e.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let at = out
            .iter()
            .position(|(k, _)| k == "prepare.region_area")
            .expect("fixed key");
        out.splice(at..at, textures);
        out
    }

    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Hash of the keys that affect the bag cache.
    pub fn prepare_hash(&self) -> String {
        let text: String = self
            .entries()
            .into_iter()
            .filter(|(k, _)| k.starts_with("prepare.") || k == "model.dim" || k == "classes")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        msmil::training::config_hash(&text)
    }

    /// Cross-field checks, run before any work starts.
    pub fn validate(&self) -> Result<(), UsageError> {
        let c = self.synth.classes.len();
        let mut model = self.model.clone();
        model.slide_classes = c;
        model.instance_classes = c;
        model.validate().map_err(|e| usage(e.to_string()))?;
        self.train.validate().map_err(|e| usage(e.to_string()))?;
        self.synth.validate().map_err(|e| usage(e.to_string()))?;
        if self.slides == 0 {
            return Err(usage("synth.slides must be at least 1"));
        }
        if self.folds < 2 {
            return Err(usage("train.folds must be at least 2"));
        }
        if let FoldSelection::One(f) = self.fold {
            if f >= self.folds {
                return Err(usage(format!("train.fold {f} out of range for {} folds", self.folds)));
            }
        }
        if self.prepare.region_area == 0 || self.prepare.instance.patch_size == 0 {
            return Err(usage("prepare.region_area and prepare.patch_size must be positive"));
        }
        Ok(())
    }

    /// Model settings sized for `classes`.
    pub fn model_for(&self, classes: usize) -> ModelConfig {
        let mut m = self.model.clone();
        m.slide_classes = classes;
        m.instance_classes = classes;
        m
    }
}
