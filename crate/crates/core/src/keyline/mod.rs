//! Keyline features, candidate extraction and greedy keyline-set expansion.

mod anchors;
mod candidates;
mod cv;
mod expand;
mod feature;
mod set;

use std::path::{Path, PathBuf};

pub use anchors::{AnchorText, Anchors, ANCHOR_CITY_ID};
pub use candidates::{collect_candidates, extract_candidate, Candidate, CandidateList};
pub use cv::{cv_mean_auc, CvConfig, FoldPlan};
pub use expand::{
    expand_keylines, read_trajectory, write_trajectory, Expansion, TrajectoryPoint,
};
pub use feature::{city_features, feature_vector, keyline_feature, FeatureSets};
pub use set::{CityDoc, Keyline, KeylineSet};

use crate::embedding::EmbedError;
use crate::model::ModelError;
use crate::typology::Typology;

#[derive(Debug, thiserror::Error)]
pub enum KeylineError {
    #[error("city {0} has no sentences")]
    EmptyPage(String),
    #[error("keyline set is empty")]
    EmptySet,
    #[error("no positive training cities for {0}")]
    NoPositives(Typology),
    #[error("no candidate keylines for {0}")]
    NoCandidates(Typology),
    #[error("could not draw non-degenerate folds after {attempts} attempts ({reason})")]
    DegenerateFolds { attempts: u64, reason: String },
    #[error("keyline provenance: {0}")]
    Provenance(String),
    #[error("keyline file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl KeylineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        KeylineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
