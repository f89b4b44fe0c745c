use super::metrics::AucSummary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// SHA-256 of a resolved config text, hex encoded.
pub fn config_hash(resolved: &str) -> String {
    hex::encode(Sha256::digest(resolved.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fold: usize,
    pub seed: u64,
    pub config_hash: String,
    pub class_names: Vec<String>,
    /// `null` for classes whose test labels are all equal.
    pub per_class_auc: Vec<Option<f64>>,
    pub macro_auc: f64,
    pub best_epoch: usize,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub instance_head_trained: bool,
}

impl MetricsReport {
    pub fn auc(&self) -> AucSummary {
        AucSummary {
            per_class: self.per_class_auc.clone(),
            macro_auc: self.macro_auc,
        }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
