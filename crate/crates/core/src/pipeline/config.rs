//! Pipeline configuration file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::SplitConfig;
use crate::embedding::{
    CommandTransport, FixtureEncoder, FixtureTable, HttpTransport, RemoteEncoder, SentenceEncoder,
};
use crate::keyline::{AnchorText, Anchors, CvConfig};
use crate::model::{FeatureSubset, TrainerConfig};
use crate::typology::Typology;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    pub data: DataConfig,
    #[serde(default)]
    pub fetch: FetchConfig,
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub anchors: AnchorConfig,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Labeled city table: `city_id,name,url,label,via_flag,lat,lon`.
    pub dataset: PathBuf,
    /// Cities to score; same columns, labels optional. Defaults to the dataset.
    #[serde(default)]
    pub predict_list: Option<PathBuf>,
    /// Via city list; overrides the dataset's `via_flag` column when given.
    #[serde(default)]
    pub via_list: Option<PathBuf>,
    #[serde(default)]
    pub page_cache: Option<PathBuf>,
    #[serde(default)]
    pub embedding_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchConfig {
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Serve pages from cache only.
    #[serde(default)]
    pub offline: bool,
}

fn default_timeout() -> u64 {
    30
}

fn default_concurrency() -> usize {
    4
}

fn default_retries() -> u32 {
    2
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            timeout_secs: default_timeout(),
            concurrency: default_concurrency(),
            retries: default_retries(),
            offline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EncoderConfig {
    /// Deterministic lookup encoder; without a table every token is hashed.
    Fixture {
        #[serde(default)]
        table: Option<PathBuf>,
        #[serde(default)]
        dim: Option<usize>,
    },
    /// JSON over HTTP POST.
    Http {
        id: String,
        dim: usize,
        url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        batch_size: Option<usize>,
    },
    /// JSON over a child process's stdin and stdout.
    Command {
        id: String,
        dim: usize,
        program: Vec<String>,
        #[serde(default)]
        batch_size: Option<usize>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    pub congestion: Option<String>,
    pub auto: Option<String>,
    pub transit: Option<String>,
    pub bike: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub stratified: bool,
}

fn default_fraction() -> f64 {
    0.7
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_fraction: default_fraction(),
            stratified: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_folds")]
    pub repeats: usize,
    #[serde(default = "default_true")]
    pub stratified: bool,
}

fn default_folds() -> usize {
    3
}

fn default_true() -> bool {
    true
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection {
            folds: 3,
            repeats: 3,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Feature subset per task, e.g. `congestion = "f_c_opt,f_density"`.
    /// Tasks not listed use all four optimal keyline features plus density.
    #[serde(default)]
    pub features: std::collections::BTreeMap<Typology, String>,
    /// Run the subset sweep after training.
    #[serde(default)]
    pub sweep: bool,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(PipelineError::Config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if !(cfg.split.train_fraction > 0.0 && cfg.split.train_fraction < 1.0) {
            return Err(PipelineError::Config(format!(
                "split.train_fraction {} outside (0, 1)",
                cfg.split.train_fraction
            )));
        }
        for (task, subset) in &cfg.train.features {
            subset.parse::<FeatureSubset>().map_err(|e| {
                PipelineError::Config(format!("train.features.{task}: {e}"))
            })?;
        }
        if cfg.cv.folds < 2 || cfg.cv.repeats == 0 {
            return Err(PipelineError::Config("cv needs at least 2 folds and 1 repeat".into()));
        }
        Ok(cfg)
    }

    /// Parse `path` and resolve every relative path against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.data.dataset);
        for p in [
            &mut self.data.predict_list,
            &mut self.data.via_list,
            &mut self.data.page_cache,
            &mut self.data.embedding_cache,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let EncoderConfig::Fixture { table: Some(t), .. } = &mut self.encoder {
            fix(t);
        }
    }

    /// Check that every input path exists before any work starts.
    pub fn check_inputs(&self) -> Result<(), PipelineError> {
        let mut required = vec![&self.data.dataset];
        required.extend(self.data.predict_list.as_ref());
        required.extend(self.data.via_list.as_ref());
        if let EncoderConfig::Fixture { table: Some(t), .. } = &self.encoder {
            required.push(t);
        }
        for p in required {
            if !p.exists() {
                return Err(PipelineError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn page_cache_dir(&self) -> PathBuf {
        self.data
            .page_cache
            .clone()
            .unwrap_or_else(|| self.output_dir.join("pages"))
    }

    pub fn embedding_cache_dir(&self) -> PathBuf {
        self.data
            .embedding_cache
            .clone()
            .unwrap_or_else(|| self.output_dir.join("embeddings"))
    }

    pub fn anchor_texts(&self) -> Vec<String> {
        let a = &self.anchors;
        Typology::ALL
            .iter()
            .zip([&a.congestion, &a.auto, &a.transit, &a.bike])
            .map(|(&t, o)| o.clone().unwrap_or_else(|| AnchorText::default_for(t).text))
            .collect()
    }

    pub fn split_config(&self, seed: u64) -> SplitConfig {
        SplitConfig {
            train_fraction: self.split.train_fraction,
            seed,
            stratified: self.split.stratified,
        }
    }

    pub fn cv_config(&self, seed: u64) -> CvConfig {
        CvConfig {
            folds: self.cv.folds,
            repeats: self.cv.repeats,
            seed,
            stratified: self.cv.stratified,
        }
    }

    pub fn train_subset(&self, task: Typology) -> FeatureSubset {
        self.train
            .features
            .get(&task)
            .and_then(|s| s.parse().ok())
            .unwrap_or_else(|| FeatureSubset::full(task, crate::typology::Stage::Optimal))
    }

    pub fn build_encoder(&self) -> Result<Box<dyn SentenceEncoder>, PipelineError> {
        Ok(match &self.encoder {
            EncoderConfig::Fixture { table, dim } => {
                let table = match table {
                    Some(path) => {
                        let t = FixtureTable::load(path)?;
                        if dim.is_some_and(|d| d != t.dim) {
                            return Err(PipelineError::Config(format!(
                                "encoder.dim {} differs from fixture table dim {}",
                                dim.unwrap_or_default(),
                                t.dim
                            )));
                        }
                        t
                    }
                    None => FixtureTable {
                        dim: dim.unwrap_or(64),
                        ..Default::default()
                    },
                };
                Box::new(FixtureEncoder::new(table))
            }
            EncoderConfig::Http {
                id,
                dim,
                url,
                timeout_secs,
                batch_size,
            } => {
                let t = HttpTransport::new(url.clone(), Duration::from_secs(*timeout_secs));
                let mut e = RemoteEncoder::new(id.clone(), *dim, Box::new(t));
                if let Some(b) = batch_size {
                    e = e.with_batch_size(*b);
                }
                Box::new(e)
            }
            EncoderConfig::Command {
                id,
                dim,
                program,
                batch_size,
            } => {
                let (cmd, args) = program
                    .split_first()
                    .ok_or_else(|| PipelineError::Config("encoder.program is empty".into()))?;
                let t = CommandTransport::new(cmd.clone(), args.to_vec());
                let mut e = RemoteEncoder::new(id.clone(), *dim, Box::new(t));
                if let Some(b) = batch_size {
                    e = e.with_batch_size(*b);
                }
                Box::new(e)
            }
        })
    }

    pub fn default_anchors(&self, encoder: &dyn SentenceEncoder) -> Result<Anchors, PipelineError> {
        let cache = crate::embedding::EmbeddingCache::new(self.embedding_cache_dir());
        Ok(Anchors::embed_cached(encoder, &cache, self.anchor_texts())?)
    }
}
