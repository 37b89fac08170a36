//! A fitted classifier with everything needed to score new cities.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{CityFeatures, FeatureSubset};
use super::logistic::{fit_logistic, sigmoid, TrainerConfig};
use super::metrics::{gmean_threshold, roc_auc};
use super::ModelError;
use crate::corpus::DensityNormalizer;
use crate::typology::LabelTask;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub n_train: usize,
    pub n_positive: usize,
    pub train_auc: f64,
    pub train_gmean: f64,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub schema_version: u32,
    pub task: LabelTask,
    pub features: FeatureSubset,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// G-mean cut chosen on training predictions; `p > threshold` is positive.
    pub threshold: f64,
    pub l2: f64,
    pub seed: u64,
    pub encoder_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityNormalizer>,
    pub metrics: ModelMetrics,
    /// Content hashes of the artifacts the model was trained from.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

impl TrainedModel {
    pub fn linear_score(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.weights.len() {
            return Err(ModelError::MaskMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.linear_score(x).map(sigmoid)
    }

    pub fn predict_city(&self, city: &CityFeatures) -> f64 {
        sigmoid(
            self.linear_score(&city.select(&self.features))
                .expect("subset selection matches the weight count"),
        )
    }

    pub fn label(&self, p: f64) -> bool {
        p > self.threshold
    }

    pub fn to_toml(&self) -> Result<String, ModelError> {
        toml::to_string(self).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let m: TrainedModel = toml::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if m.schema_version != MODEL_SCHEMA_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported model schema {}",
                m.schema_version
            )));
        }
        if m.weights.len() != m.features.len() {
            return Err(ModelError::MaskMismatch {
                expected: m.features.len(),
                got: m.weights.len(),
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
        }
        fs::write(path, self.to_toml()?).map_err(|e| ModelError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Fit a model on `subset` of the given cities and pick its G-mean threshold
/// from the training predictions.
pub fn train_model(
    task: LabelTask,
    subset: &FeatureSubset,
    cities: &[CityFeatures],
    labels: &[bool],
    config: &TrainerConfig,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    let x: Vec<Vec<f64>> = cities.iter().map(|c| c.select(subset)).collect();
    let fit = fit_logistic(&x, labels, config)?;
    if !fit.converged {
        log::warn!(
            "{task} model stopped after {} iterations with gradient norm {:e}",
            fit.iterations,
            fit.grad_inf_norm
        );
    }
    let mut model = TrainedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        task,
        features: subset.clone(),
        weights: fit.weights,
        bias: fit.bias,
        threshold: 0.5,
        l2: fit.l2,
        seed,
        encoder_id: String::new(),
        density: None,
        metrics: ModelMetrics {
            n_train: labels.len(),
            n_positive: labels.iter().filter(|&&l| l).count(),
            train_auc: 0.0,
            train_gmean: 0.0,
            loss: fit.loss,
            iterations: fit.iterations,
            converged: fit.converged,
            test_auc: None,
        },
        inputs: BTreeMap::new(),
    };
    let scores: Vec<f64> = x
        .iter()
        .map(|row| model.predict_proba(row))
        .collect::<Result<_, _>>()?;
    let g = gmean_threshold(&scores, labels)?;
    model.threshold = g.threshold;
    model.metrics.train_gmean = g.gmean;
    model.metrics.train_auc = roc_auc(&scores, labels)?;
    Ok(model)
}
