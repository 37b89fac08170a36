//! Page retrieval, sentence and infobox extraction, labeled datasets and splits.

mod density;
mod fetch;
mod infobox;
mod record;
mod sentences;
mod split;
mod wikitext;

use std::path::{Path, PathBuf};

pub use density::DensityNormalizer;
pub use fetch::{
    file_key, FetchError, HttpSource, LocalSource, MemorySource, OfflineSource, PageCache,
    PageSource, RawPage, SchemeSource,
};
pub use infobox::{
    extract_infobox_numerics, sq_km_to_sq_mi, sq_mi_to_sq_km, InfoboxNumerics, InfoboxReport,
    SQ_MI_PER_SQ_KM,
};
pub use record::{
    load_dataset, read_dataset, read_infobox_table, read_sentences, write_dataset,
    write_infobox_table, write_sentences, CityRecord, DatasetEntry, InfoboxRow,
};
pub use sentences::split_sentences;
pub use split::{build_split, DatasetSplit, SplitConfig};
pub use wikitext::{body_paragraphs, extract_sentences, strip_markup};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("table error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("duplicate city id {0}")]
    DuplicateCity(String),
    #[error("unknown city id {0}")]
    UnknownCity(String),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("empty article: no body paragraphs")]
    EmptyArticle,
    #[error("density normalization needs at least 2 training densities, found {0}")]
    NoDensity(usize),
    #[error("city {city_id} has no label for task {task}")]
    MissingLabel { city_id: String, task: String },
    #[error("task {0} has no positive examples in the training set")]
    NoPositives(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CorpusError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
