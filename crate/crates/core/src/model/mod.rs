//! One-vs-all logistic models, evaluation metrics and the feature-subset sweep.

mod features;
mod logistic;
mod metrics;
mod sweep;
mod trained;

use std::path::{Path, PathBuf};

pub use features::{sweep_subsets, CityFeatures, FeatureColumn, FeatureSubset, FeatureVector};
pub use logistic::{fit_logistic, loss, loss_and_gradient, sigmoid, LogisticFit, TrainerConfig};
pub use metrics::{
    classification_scores, gmean_threshold, roc_auc, threshold_candidates, ClassificationScores,
    Confusion, GmeanThreshold,
};
pub use sweep::{read_sweep_report, subset_sweep, write_sweep_report, SweepRow};
pub use trained::{train_model, ModelMetrics, TrainedModel, MODEL_SCHEMA_VERSION};


#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("labels contain a single class")]
    SingleClass,
    #[error("feature mask mismatch: model expects {expected} inputs, got {got}")]
    MaskMismatch { expected: usize, got: usize },
    #[error("missing feature variant {0}")]
    MissingVariant(String),
    #[error("model file format error: {0}")]
    Format(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
