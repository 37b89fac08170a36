//! Artifact locations, atomic writes and input hashing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::corpus::file_key;
use crate::typology::{LabelTask, Stage, Typology};

/// Input key recording the encoder an artifact was computed with.
pub(crate) const ENCODER_KEY: &str = "encoder_id";

/// Where each artifact lives under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
    /// Inputs living outside the output directory, keyed by a stable name.
    external: BTreeMap<String, PathBuf>,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout {
            root: root.into(),
            external: BTreeMap::new(),
        }
    }

    pub fn with_external(mut self, key: &str, path: impl Into<PathBuf>) -> Self {
        self.external.insert(key.to_string(), path.into());
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn sentences_dir(&self) -> PathBuf {
        self.root.join("sentences")
    }

    pub fn sentences(&self, city_id: &str) -> PathBuf {
        self.root.join("sentences").join(format!("{}.tsv", file_key(city_id)))
    }

    pub fn infobox(&self) -> PathBuf {
        self.root.join("infobox.csv")
    }

    pub fn ingest_failures(&self) -> PathBuf {
        self.root.join("ingest.failures.csv")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.csv")
    }

    pub fn via_split(&self) -> PathBuf {
        self.root.join("feasibility").join("split.csv")
    }

    pub fn keylines(&self, t: Typology, stage: Stage) -> PathBuf {
        self.root.join("keylines").join(format!("{t}.{stage}.toml"))
    }

    pub fn trajectory(&self, t: Typology) -> PathBuf {
        self.root.join("expansion").join(format!("{t}.trajectory.csv"))
    }

    pub fn model(&self, task: LabelTask) -> PathBuf {
        match task {
            LabelTask::Via => self.root.join("feasibility").join("model.toml"),
            _ => self.root.join("models").join(format!("{task}.toml")),
        }
    }

    pub fn train_predictions(&self, task: LabelTask) -> PathBuf {
        match task {
            LabelTask::Via => self.root.join("feasibility").join("train_predictions.csv"),
            _ => self.root.join("models").join(format!("{task}.train.csv")),
        }
    }

    pub fn metrics(&self, task: LabelTask) -> PathBuf {
        match task {
            LabelTask::Via => self.root.join("feasibility").join("metrics.toml"),
            _ => self.root.join("models").join(format!("{task}.metrics.toml")),
        }
    }

    pub fn sweep(&self, t: Typology) -> PathBuf {
        self.root.join("sweep").join(format!("{t}.csv"))
    }

    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions.csv")
    }

    pub fn prediction_failures(&self) -> PathBuf {
        self.root.join("predictions.failures.csv")
    }

    pub fn ratios(&self) -> PathBuf {
        self.root.join("feasibility").join("ratios.csv")
    }

    /// Key for `path` in an artifact's input table.
    pub fn rel(&self, path: &Path) -> String {
        if let Some((k, _)) = self.external.iter().find(|(_, p)| p.as_path() == path) {
            return k.clone();
        }
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn abs(&self, key: &str) -> PathBuf {
        if let Some(p) = self.external.get(key) {
            return p.clone();
        }
        let p = Path::new(key);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Hash each file and record it under its relative key.
    pub(crate) fn input_hashes(
        &self,
        paths: &[PathBuf],
        encoder_id: Option<&str>,
    ) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut out = BTreeMap::new();
        for p in paths {
            out.insert(self.rel(p), file_sha256(p)?);
        }
        if let Some(id) = encoder_id {
            out.insert(ENCODER_KEY.to_string(), id.to_string());
        }
        Ok(out)
    }

    /// Fail when any recorded input no longer hashes to its recorded value.
    pub(crate) fn verify_inputs(
        &self,
        artifact: &Path,
        inputs: &BTreeMap<String, String>,
        encoder_id: &str,
        hint: &str,
    ) -> Result<(), PipelineError> {
        for (key, expected) in inputs {
            let current = if key == ENCODER_KEY {
                encoder_id.to_string()
            } else {
                let p = self.abs(key);
                if !p.exists() {
                    return Err(PipelineError::Stale {
                        artifact: artifact.to_path_buf(),
                        input: format!("{key} (missing)"),
                        hint: hint.to_string(),
                    });
                }
                file_sha256(&p)?
            };
            if &current != expected {
                return Err(PipelineError::Stale {
                    artifact: artifact.to_path_buf(),
                    input: key.clone(),
                    hint: hint.to_string(),
                });
            }
        }
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Write through a temporary sibling and rename into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn require(path: &Path, hint: &str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact {
            path: path.to_path_buf(),
            hint: hint.to_string(),
        })
    }
}
