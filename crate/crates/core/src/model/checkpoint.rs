//! Checkpoint directory: `manifest.json` plus one tensor container per weight
//! under `weights/`, named after the parameter.

use super::config::ModelConfig;
use super::network::Model;
use crate::error::{Error, Result};
use crate::instances::ClassSet;
use crate::numerics::{load_tensor, save_tensor, Dtype};
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT: &str = "msmil-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub config: ModelConfig,
    pub classes: ClassSet,
    pub step: u64,
    /// False when the instance head never received a training signal.
    pub instance_head_trained: bool,
    pub weights: Vec<WeightEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub classes: ClassSet,
    pub step: u64,
    pub instance_head_trained: bool,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let weights_dir = dir.join("weights");
        std::fs::create_dir_all(&weights_dir).map_err(|e| Error::io(&weights_dir, e))?;
        let mut weights = Vec::new();
        for (_, name, tensor) in self.model.params().iter() {
            let file = format!("weights/{name}.tensor");
            save_tensor(&dir.join(&file), tensor, Dtype::F64)?;
            weights.push(WeightEntry {
                name: name.to_string(),
                file,
                shape: tensor.shape().to_vec(),
            });
        }
        let manifest = CheckpointManifest {
            format: FORMAT.into(),
            config: self.model.config().clone(),
            classes: self.classes.clone(),
            step: self.step,
            instance_head_trained: self.instance_head_trained,
            weights,
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CheckpointManifest = serde_json::from_slice(&raw)?;
        if manifest.format != FORMAT {
            return Err(Error::format(&path, format!("unknown format `{}`", manifest.format)));
        }
        let mut model = Model::new(manifest.config.clone(), 0)?;
        if manifest.weights.len() != model.params().len() {
            return Err(Error::format(
                &path,
                format!(
                    "{} weights listed, model has {}",
                    manifest.weights.len(),
                    model.params().len()
                ),
            ));
        }
        for entry in &manifest.weights {
            let id = model
                .params()
                .id_of(&entry.name)
                .ok_or_else(|| Error::format(&path, format!("unknown weight `{}`", entry.name)))?;
            let tensor = load_tensor(&dir.join(&entry.file))?;
            if tensor.shape() != model.params().get(id).shape() {
                return Err(Error::format(
                    &path,
                    format!("weight `{}` has shape {:?}", entry.name, tensor.shape()),
                ));
            }
            *model.params_mut().get_mut(id) = tensor.with_grad(true);
        }
        Ok(Self {
            model,
            classes: manifest.classes,
            step: manifest.step,
            instance_head_trained: manifest.instance_head_trained,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_weights() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ModelConfig::new(8, 4);
        cfg.heads = 2;
        let ck = Checkpoint {
            model: Model::new(cfg, 11).unwrap(),
            classes: ClassSet::default(),
            step: 42,
            instance_head_trained: true,
        };
        ck.save(dir.path()).unwrap();
        assert!(dir.path().join("weights/block0.attn.wq.tensor").exists());
        assert_eq!(Checkpoint::load(dir.path()).unwrap(), ck);
    }

    #[test]
    fn shape_tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ModelConfig::new(8, 4);
        cfg.heads = 2;
        let ck = Checkpoint {
            model: Model::new(cfg, 1).unwrap(),
            classes: ClassSet::default(),
            step: 0,
            instance_head_trained: false,
        };
        ck.save(dir.path()).unwrap();
        save_tensor(
            &dir.path().join("weights/class_token.tensor"),
            &crate::numerics::Tensor::zeros(&[3]),
            Dtype::F64,
        )
        .unwrap();
        assert!(Checkpoint::load(dir.path()).is_err());
    }
}
