#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use tempfile::TempDir;
use typology_core::pipeline::Pipeline;
use typology_core::synthetic::{SyntheticConfig, SyntheticCorpus, SyntheticFiles};

pub struct Project {
    pub dir: TempDir,
    pub config: PathBuf,
    pub corpus: SyntheticCorpus,
    pub files: SyntheticFiles,
}

impl Project {
    pub fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline::load(&self.config).unwrap()
    }

    pub fn read(&self, rel: &str) -> Vec<u8> {
        fs::read(self.out().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }
}

pub fn config_text(extra: &str) -> String {
    format!(
        r#"schema_version = 1
output_dir = "out"
seed = 7

[data]
dataset = "dataset.csv"

[encoder]
kind = "fixture"
table = "fixture.json"
{extra}"#
    )
}

pub fn planted_project(config: SyntheticConfig, extra: &str) -> Project {
    let dir = tempfile::tempdir().unwrap();
    let corpus = SyntheticCorpus::generate(config);
    let files = corpus.write_files(dir.path()).unwrap();
    let path = dir.path().join("pipeline.toml");
    fs::write(&path, config_text(extra)).unwrap();
    Project {
        dir,
        config: path,
        corpus,
        files,
    }
}

/// Every file under `root` with its bytes, sorted by relative path.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Run every stage through training for all four tasks.
pub fn run_all_without_predict(p: &Pipeline) {
    let tasks = typology_core::Typology::ALL;
    assert!(!p.ingest().unwrap().is_partial());
    assert!(!p.embed().unwrap().is_partial());
    p.candidates(&tasks).unwrap();
    p.expand(&tasks).unwrap();
    p.train(&tasks).unwrap();
}

/// Run every stage through prediction for all four tasks.
pub fn run_all(p: &Pipeline) {
    run_all_without_predict(p);
    assert!(!p.predict().unwrap().is_partial());
}
