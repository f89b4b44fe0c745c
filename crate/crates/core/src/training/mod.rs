//! Masking, losses, optimisation, splitting and evaluation.

pub mod config;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod optimizer;
pub mod report;
pub mod split;
pub mod trainer;

pub use config::{ClassWeighting, Reduction, TrainConfig};
pub use losses::{instance_loss, inverse_frequency_weights, slide_loss, total_loss};
pub use mask::{gather_labels, mask_indices, random_mask, unmasked_count, LabelSource, MaskedBag};
pub use metrics::{macro_auc, roc_auc, AucSummary};
pub use optimizer::{AdamW, Ranger};
pub use report::{config_hash, mean_std, MetricsReport};
pub use split::{patient_keys, stratified_kfold, train_val_test_split, Split};
pub use trainer::{evaluate, train, validation_loss, ClassWeights, TrainOutcome};
