//! End-to-end commands over persisted, content-hashed artifacts.

mod artifacts;
mod commands;
mod config;
mod predict;

use std::path::{Path, PathBuf};

pub use artifacts::{file_sha256, Layout};
pub use commands::{Failure, Outcome, Pipeline, Scorer};
pub use config::{
    AnchorConfig, CvSection, DataConfig, EncoderConfig, FetchConfig, PipelineConfig, SplitSection,
    TrainSection, CONFIG_SCHEMA_VERSION,
};
pub use predict::{read_predictions, write_predictions, PredictionRow, PREDICTION_HEADER};

use crate::corpus::CorpusError;
use crate::embedding::EmbedError;
use crate::feasibility::FeasibilityError;
use crate::keyline::KeylineError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {path}; run `{hint}` first")]
    MissingArtifact { path: PathBuf, hint: String },
    #[error("stale artifact {artifact}: {input} changed since it was built; rerun `{hint}`")]
    Stale {
        artifact: PathBuf,
        input: String,
        hint: String,
    },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Keyline(#[from] KeylineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
