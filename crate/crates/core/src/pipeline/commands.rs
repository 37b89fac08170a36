//! The eight pipeline commands.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::{require, write_atomic, Layout};
use super::config::PipelineConfig;
use super::predict::{write_predictions, PredictionRow};
use super::PipelineError;
use crate::corpus::{
    build_split, extract_infobox_numerics, extract_sentences, load_dataset, read_infobox_table,
    read_sentences, write_infobox_table, write_sentences, CityRecord, CorpusError, DatasetEntry,
    DatasetSplit, DensityNormalizer, FetchError, InfoboxRow, OfflineSource, PageCache, PageSource,
    SchemeSource,
};
use crate::embedding::{EmbedError, EmbeddingCache, EmbeddingMatrix, SentenceEncoder};
use crate::feasibility::{
    apply_via_list, feasibility_subset, ratio_report, read_via_list, train_feasibility_model,
    write_ratio_report,
};
use crate::keyline::{
    city_features, collect_candidates, expand_keylines, write_trajectory, Anchors, CandidateList,
    CityDoc, FeatureSets, KeylineError, KeylineSet,
};
use crate::model::{
    classification_scores, roc_auc, subset_sweep, sweep_subsets, train_model, write_sweep_report,
    CityFeatures, ClassificationScores, FeatureColumn, FeatureSubset, ModelError, TrainedModel,
};
use crate::typology::{LabelTask, Stage, Typology};

/// A city that a command could not process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub city_id: String,
    pub reason: String,
}

/// Summary of a command run. Any failure makes the run partial.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub summary: Vec<String>,
    pub failures: Vec<Failure>,
}

impl Outcome {
    fn note(&mut self, line: String) {
        log::debug!("{line}");
        self.summary.push(line);
    }

    fn fail(&mut self, city_id: &str, reason: String) {
        log::warn!("{city_id}: {reason}");
        self.failures.push(Failure {
            city_id: city_id.to_string(),
            reason,
        });
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// 0 on full success, 1 when some cities failed.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.is_partial())
    }
}

/// Sentences and embeddings for a set of cities.
struct DocStore {
    ids: Vec<String>,
    sentences: Vec<Vec<String>>,
    embeddings: Vec<EmbeddingMatrix>,
    index: HashMap<String, usize>,
}

impl DocStore {
    fn docs(&self) -> Vec<CityDoc<'_>> {
        self.ids
            .iter()
            .zip(&self.sentences)
            .zip(&self.embeddings)
            .map(|((id, s), e)| CityDoc {
                city_id: id,
                sentences: s,
                embeddings: e,
            })
            .collect()
    }

    fn embedding(&self, id: &str) -> &EmbeddingMatrix {
        &self.embeddings[self.index[id]]
    }
}

/// Models and keyline matrices needed to score any city.
pub struct Scorer {
    models: Vec<TrainedModel>,
    sets: FeatureSets,
    infobox: HashMap<String, InfoboxRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskReport {
    task: LabelTask,
    features: String,
    n_train: usize,
    n_test: usize,
    threshold: f64,
    train_auc: f64,
    train_gmean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<ClassificationScores>,
}

/// Features of a labeled partition.
struct Partition {
    train: Vec<CityFeatures>,
    test: Vec<CityFeatures>,
    density: Option<DensityNormalizer>,
}

pub struct Pipeline {
    config: PipelineConfig,
    layout: Layout,
    seed: Option<u64>,
    encoder: Box<dyn SentenceEncoder>,
    source: Box<dyn PageSource>,
}

const DATASET_KEY: &str = "data.dataset";
const VIA_KEY: &str = "data.via_list";
const PREDICT_KEY: &str = "data.predict_list";

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.check_inputs()?;
        let encoder = config.build_encoder()?;
        let source: Box<dyn PageSource> = if config.fetch.offline {
            Box::new(OfflineSource)
        } else {
            Box::new(SchemeSource::new(Duration::from_secs(config.fetch.timeout_secs)))
        };
        let mut layout = Layout::new(&config.output_dir).with_external(DATASET_KEY, &config.data.dataset);
        if let Some(p) = &config.data.via_list {
            layout = layout.with_external(VIA_KEY, p);
        }
        if let Some(p) = &config.data.predict_list {
            layout = layout.with_external(PREDICT_KEY, p);
        }
        Ok(Pipeline {
            seed: config.seed,
            config,
            layout,
            encoder,
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::new(PipelineConfig::load(path)?)
    }

    /// Override the configured seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if seed.is_some() {
            self.seed = seed;
        }
        self
    }

    /// Replace the page source used on cache misses.
    pub fn with_source(mut self, source: Box<dyn PageSource>) -> Self {
        self.source = source;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn encoder(&self) -> &dyn SentenceEncoder {
        &*self.encoder
    }

    fn seed(&self) -> Result<u64, PipelineError> {
        self.seed.ok_or_else(|| {
            PipelineError::Config("a seed is required: set `seed` in the config or pass --seed".into())
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.fetch.concurrency.max(1))
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))
    }

    fn dataset(&self) -> Result<Vec<DatasetEntry>, PipelineError> {
        Ok(load_dataset(&self.config.data.dataset)?)
    }

    fn predict_entries(&self) -> Result<Vec<DatasetEntry>, PipelineError> {
        match &self.config.data.predict_list {
            Some(p) => Ok(load_dataset(p)?),
            None => self.dataset(),
        }
    }

    /// Dataset cities followed by predict-list cities not already listed.
    fn all_entries(&self) -> Result<Vec<DatasetEntry>, PipelineError> {
        let mut out = self.dataset()?;
        if self.config.data.predict_list.is_some() {
            let known: HashMap<String, String> =
                out.iter().map(|e| (e.city_id.clone(), e.url.clone())).collect();
            for e in self.predict_entries()? {
                match known.get(&e.city_id) {
                    Some(url) if *url != e.url => {
                        return Err(PipelineError::Config(format!(
                            "city {} has different URLs in the dataset and the predict list",
                            e.city_id
                        )))
                    }
                    Some(_) => {}
                    None => out.push(e),
                }
            }
        }
        Ok(out)
    }

    fn sentences(&self, city_id: &str) -> Result<Option<Vec<String>>, PipelineError> {
        let path = self.layout.sentences(city_id);
        match std::fs::File::open(&path) {
            Ok(f) => Ok(Some(read_sentences(f)?.1)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(PipelineError::io(&path, e)),
        }
    }

    fn embedding_cache(&self) -> EmbeddingCache {
        EmbeddingCache::new(self.config.embedding_cache_dir())
    }

    fn infobox(&self) -> Result<HashMap<String, InfoboxRow>, PipelineError> {
        let path = self.layout.infobox();
        require(&path, "ingest")?;
        let f = std::fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(read_infobox_table(f)?
            .into_iter()
            .map(|r| (r.city_id.clone(), r))
            .collect())
    }

    /// Dataset cities that ingested successfully, with infobox values and
    /// Via flags merged in.
    fn records(&self) -> Result<Vec<CityRecord>, PipelineError> {
        let infobox = self.infobox()?;
        let mut records = Vec::new();
        let mut skipped = 0usize;
        for e in self.dataset()? {
            match infobox.get(&e.city_id) {
                Some(row) if self.layout.sentences(&e.city_id).exists() => {
                    let mut r = CityRecord::from_entry(&e);
                    r.apply_infobox(&row.numerics());
                    records.push(r);
                }
                _ => skipped += 1,
            }
        }
        if skipped > 0 {
            log::warn!("{skipped} dataset cities have no ingested page and are left out");
        }
        if let Some(path) = &self.config.data.via_list {
            let f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
            let list = read_via_list(std::io::BufReader::new(f))?;
            for v in apply_via_list(&mut records, &list) {
                log::warn!("via list entry {} ({}) matches no ingested dataset city", v.name, v.url);
            }
        }
        Ok(records)
    }

    fn anchors(&self) -> Result<Anchors, PipelineError> {
        self.config.default_anchors(self.encoder())
    }

    /// Load sentences and cached embeddings; both must exist.
    fn doc_store(&self, ids: &[String]) -> Result<DocStore, PipelineError> {
        let cache = self.embedding_cache();
        let loaded: Vec<(Vec<String>, EmbeddingMatrix)> = ids
            .par_iter()
            .map(|id| {
                let sentences = self.sentences(id)?.ok_or_else(|| PipelineError::MissingArtifact {
                    path: self.layout.sentences(id),
                    hint: "ingest".into(),
                })?;
                let emb = cache
                    .load(id, self.encoder.id(), self.encoder.dim(), &sentences)?
                    .ok_or_else(|| PipelineError::MissingArtifact {
                        path: cache.path_for(id, self.encoder.id()),
                        hint: "embed".into(),
                    })?;
                Ok((sentences, emb))
            })
            .collect::<Result<_, PipelineError>>()?;
        let (sentences, embeddings) = loaded.into_iter().unzip();
        Ok(DocStore {
            ids: ids.to_vec(),
            sentences,
            embeddings,
            index: ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect(),
        })
    }

    fn hash_inputs(&self, paths: &[PathBuf]) -> Result<BTreeMap<String, String>, PipelineError> {
        self.layout.input_hashes(paths, Some(self.encoder.id()))
    }

    fn verify(&self, artifact: &Path, inputs: &BTreeMap<String, String>, hint: &str) -> Result<(), PipelineError> {
        self.layout.verify_inputs(artifact, inputs, self.encoder.id(), hint)
    }

    /// Rebuild the typology split and persist its membership. The split is a
    /// pure function of the ingested dataset and the seed, so rewriting it
    /// leaves the file unchanged unless an input changed.
    fn split(&self, records: &[CityRecord], task: Typology, seed: u64) -> Result<DatasetSplit, PipelineError> {
        let labeled: Vec<CityRecord> = records
            .iter()
            .filter(|r| r.typology_label.is_some())
            .cloned()
            .collect();
        let split = build_split(&labeled, task.into(), &self.config.split_config(seed))?;
        let mut buf = Vec::new();
        split.write_membership(&mut buf)?;
        write_atomic(&self.layout.split(), &buf)?;
        Ok(split)
    }

    fn set_hint(stage: Stage) -> &'static str {
        match stage {
            Stage::Optimal => "expand",
            _ => "candidates",
        }
    }

    fn load_set(&self, t: Typology, stage: Stage) -> Result<KeylineSet, PipelineError> {
        let path = self.layout.keylines(t, stage);
        let hint = Self::set_hint(stage);
        require(&path, hint)?;
        let set = KeylineSet::load(&path)?;
        if set.typology != t || set.stage != stage {
            return Err(KeylineError::Format(format!(
                "{} holds the {} {} set",
                path.display(),
                set.typology,
                set.stage
            ))
            .into());
        }
        self.verify(&path, &set.inputs, hint)?;
        Ok(set)
    }

    /// Resolve the keyline sets behind `columns`. Returns the matrices and
    /// the set files they came from.
    fn feature_sets(
        &self,
        columns: &BTreeSet<(Typology, Stage)>,
        anchors: &Anchors,
    ) -> Result<(FeatureSets, Vec<PathBuf>), PipelineError> {
        let mut sets = BTreeMap::new();
        let mut sources = BTreeSet::new();
        for &(t, s) in columns {
            let set = self.load_set(t, s)?;
            sources.extend(set.keylines.iter().filter_map(|k| k.source_city.clone()));
            sets.insert((t, s), set);
        }
        let ids: Vec<String> = sources.into_iter().collect();
        let store = self.doc_store(&ids)?;
        let docs = store.docs();
        let fs = FeatureSets::build(|t, s| match sets.get(&(t, s)) {
            Some(set) => set.resolve(anchors, &docs).map(Some),
            None => Ok(None),
        })?;
        let files = columns.iter().map(|&(t, s)| self.layout.keylines(t, s)).collect();
        Ok((fs, files))
    }

    fn columns_of<'a, I>(subsets: I) -> BTreeSet<(Typology, Stage)>
    where
        I: IntoIterator<Item = &'a FeatureSubset>,
    {
        subsets
            .into_iter()
            .flat_map(|s| s.columns().iter())
            .filter_map(|c| match *c {
                FeatureColumn::Keyline(t, s) => Some((t, s)),
                FeatureColumn::Density => None,
            })
            .collect()
    }

    /// Keyline features of the split's cities plus density scaled with a
    /// normalizer fitted on the training cities.
    fn partition(
        &self,
        records: &[CityRecord],
        split: &DatasetSplit,
        sets: &FeatureSets,
        with_density: bool,
    ) -> Result<Partition, PipelineError> {
        let by_id: HashMap<&str, &CityRecord> = records.iter().map(|r| (r.city_id.as_str(), r)).collect();
        let density = if with_density {
            Some(DensityNormalizer::fit(
                split.train.iter().map(|id| by_id[id.as_str()].density_per_sq_mi),
            )?)
        } else {
            None
        };
        let ids: Vec<String> = split.train.iter().chain(&split.test).cloned().collect();
        let store = self.doc_store(&ids)?;
        let feats = |ids: &[String]| -> Result<Vec<CityFeatures>, PipelineError> {
            ids.par_iter()
                .map(|id| {
                    let d = density
                        .map(|n| n.transform(by_id[id.as_str()].density_per_sq_mi))
                        .unwrap_or(f64::NAN);
                    Ok(city_features(store.embedding(id), sets, d)?)
                })
                .collect()
        };
        Ok(Partition {
            train: feats(&split.train)?,
            test: feats(&split.test)?,
            density,
        })
    }

    fn write_train_predictions(
        &self,
        path: &Path,
        ids: &[String],
        labels: &[bool],
        model: &TrainedModel,
        feats: &[CityFeatures],
    ) -> Result<(), PipelineError> {
        let mut out = String::from("city_id,label,p\n");
        for ((id, &l), f) in ids.iter().zip(labels).zip(feats) {
            let _ = writeln!(out, "{id},{},{}", u8::from(l), model.predict_city(f));
        }
        write_atomic(path, out.as_bytes())
    }

    fn save_model(&self, path: &Path, model: &TrainedModel) -> Result<(), PipelineError> {
        write_atomic(path, model.to_toml()?.as_bytes())
    }

    fn write_toml<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), PipelineError> {
        let text = toml::to_string(value).map_err(|e| ModelError::Format(e.to_string()))?;
        write_atomic(path, text.as_bytes())
    }

    /// Fetch every dataset and predict-list page, then write sentence files
    /// and the infobox table.
    pub fn ingest(&self) -> Result<Outcome, PipelineError> {
        let entries = self.all_entries()?;
        let cache = PageCache::new(self.config.page_cache_dir());
        let results: Vec<Result<(InfoboxRow, bool, bool, usize), String>> = self
            .pool()?
            .install(|| entries.par_iter().map(|e| self.ingest_one(&cache, e)).collect());

        let mut outcome = Outcome::default();
        let mut rows = Vec::new();
        let (mut cached, mut no_infobox, mut warnings) = (0usize, 0usize, 0usize);
        let mut failures = String::from("city_id,url,reason\n");
        for (e, r) in entries.iter().zip(results) {
            match r {
                Ok((row, from_cache, found, warns)) => {
                    cached += usize::from(from_cache);
                    no_infobox += usize::from(!found);
                    warnings += warns;
                    rows.push(row);
                }
                Err(reason) => {
                    let _ = writeln!(failures, "{},{},{}", csv_field(&e.city_id), csv_field(&e.url), csv_field(&reason));
                    let stale = self.layout.sentences(&e.city_id);
                    if stale.exists() {
                        std::fs::remove_file(&stale).map_err(|err| PipelineError::io(&stale, err))?;
                    }
                    outcome.fail(&e.city_id, reason);
                }
            }
        }
        let mut buf = Vec::new();
        write_infobox_table(&mut buf, &rows)?;
        write_atomic(&self.layout.infobox(), &buf)?;
        write_atomic(&self.layout.ingest_failures(), failures.as_bytes())?;
        outcome.note(format!(
            "ingested {} of {} pages ({} fetched, {cached} from cache)",
            rows.len(),
            entries.len(),
            rows.len() - cached
        ));
        outcome.note(format!("{no_infobox} pages without an infobox, {warnings} infobox parse warnings"));
        if outcome.is_partial() {
            outcome.note(format!(
                "{} pages failed; see {}",
                outcome.failures.len(),
                self.layout.ingest_failures().display()
            ));
        }
        Ok(outcome)
    }

    fn ingest_one(&self, cache: &PageCache, e: &DatasetEntry) -> Result<(InfoboxRow, bool, bool, usize), String> {
        let page = self.fetch_with_retries(cache, e).map_err(|err| err.to_string())?;
        let sentences = extract_sentences(&page.markup).map_err(|err| err.to_string())?;
        let info = extract_infobox_numerics(&page.markup);
        for w in &info.warnings {
            log::warn!("{}: {w}", e.city_id);
        }
        let mut buf = Vec::new();
        write_sentences(&mut buf, &e.city_id, &sentences).map_err(|err| err.to_string())?;
        write_atomic(&self.layout.sentences(&e.city_id), &buf).map_err(|err| err.to_string())?;
        Ok((
            InfoboxRow::new(&e.city_id, &info.numerics),
            page.from_cache,
            info.found,
            info.warnings.len(),
        ))
    }

    fn fetch_with_retries(&self, cache: &PageCache, e: &DatasetEntry) -> Result<crate::corpus::RawPage, FetchError> {
        let retries = if self.config.fetch.offline { 0 } else { self.config.fetch.retries };
        let mut attempt = 0;
        loop {
            match cache.fetch_page(&*self.source, &e.city_id, &e.url) {
                Err(err) if err.is_retriable() && attempt < retries => {
                    attempt += 1;
                    log::debug!("{}: retry {attempt} after {err}", e.city_id);
                    std::thread::sleep(Duration::from_millis(250 << attempt));
                }
                other => return other,
            }
        }
    }

    /// Embed every ingested page and the anchors into the cache.
    pub fn embed(&self) -> Result<Outcome, PipelineError> {
        let entries = self.all_entries()?;
        let cache = self.embedding_cache();
        let anchors = self.anchors()?;
        debug_assert_eq!(anchors.matrix().dim(), self.encoder.dim());
        let results: Vec<Option<Result<(bool, usize), EmbedError>>> = self.pool()?.install(|| {
            entries
                .par_iter()
                .map(|e| {
                    let sentences = match self.sentences(&e.city_id) {
                        Ok(Some(s)) => s,
                        Ok(None) => return None,
                        Err(err) => return Some(Err(EmbedError::Protocol(err.to_string()))),
                    };
                    Some(
                        cache
                            .embed(self.encoder(), &e.city_id, &sentences)
                            .map(|(m, hit)| (hit, m.rows())),
                    )
                })
                .collect()
        });
        let mut outcome = Outcome::default();
        let (mut hits, mut misses, mut rows, mut skipped) = (0usize, 0usize, 0usize, 0usize);
        for (e, r) in entries.iter().zip(results) {
            match r {
                None => skipped += 1,
                Some(Ok((hit, n))) => {
                    if hit {
                        hits += 1;
                    } else {
                        misses += 1;
                    }
                    rows += n;
                }
                Some(Err(err @ EmbedError::DimensionMismatch { .. })) => {
                    return Err(PipelineError::Config(format!(
                        "cached embeddings for {} do not match encoder {}: {err}; clear {} or fix encoder.dim",
                        e.city_id,
                        self.encoder.id(),
                        cache.path_for(&e.city_id, self.encoder.id()).display()
                    )))
                }
                Some(Err(err)) => outcome.fail(&e.city_id, err.to_string()),
            }
        }
        let total = hits + misses;
        outcome.note(format!(
            "embedded {total} cities ({rows} sentences) with {}: {hits} cache hits, {misses} encoded",
            self.encoder.id()
        ));
        if skipped > 0 {
            outcome.note(format!("{skipped} cities have no ingested page and were skipped"));
        }
        Ok(outcome)
    }

    /// Anchor-only and full candidate keyline sets per task.
    pub fn candidates(&self, tasks: &[Typology]) -> Result<Outcome, PipelineError> {
        let seed = self.seed()?;
        let records = self.records()?;
        let split = self.split(&records, tasks[0], seed)?;
        let anchors = self.anchors()?;
        let store = self.doc_store(&split.train)?;
        let mut outcome = Outcome::default();
        for &t in tasks {
            let labels = split.for_task(&records, t.into())?;
            let positives: Vec<CityDoc<'_>> = labels
                .train_positives()
                .map(|id| CityDoc {
                    city_id: &store.ids[store.index[id]],
                    sentences: &store.sentences[store.index[id]],
                    embeddings: store.embedding(id),
                })
                .collect();
            let list = collect_candidates(t, &anchors, &positives)?;
            if list.is_empty() {
                return Err(KeylineError::NoCandidates(t).into());
            }
            let initial = KeylineSet::anchor_only(&anchors, t);
            write_atomic(&self.layout.keylines(t, Stage::Initial), initial.to_toml()?.as_bytes())?;
            let mut all = list.keyline_set(&anchors, Stage::All, list.len());
            all.inputs = self.hash_inputs(&[self.layout.split(), self.config.data.dataset.clone()])?;
            write_atomic(&self.layout.keylines(t, Stage::All), all.to_toml()?.as_bytes())?;
            outcome.note(format!(
                "{t}: {} candidates from {} positive training pages",
                list.len(),
                positives.len()
            ));
        }
        Ok(outcome)
    }

    /// Greedy keyline expansion per task.
    pub fn expand(&self, tasks: &[Typology]) -> Result<Outcome, PipelineError> {
        let seed = self.seed()?;
        let records = self.records()?;
        let split = self.split(&records, tasks[0], seed)?;
        let labeled: Vec<DatasetSplit> = tasks
            .iter()
            .map(|&t| split.for_task(&records, t.into()))
            .collect::<Result<_, CorpusError>>()?;
        let anchors = self.anchors()?;
        let store = self.doc_store(&split.train)?;
        let mut outcome = Outcome::default();
        for (&t, labels) in tasks.iter().zip(&labeled) {
            let all_path = self.layout.keylines(t, Stage::All);
            let all = self.load_set(t, Stage::All)?;
            let list = CandidateList::from_set(&all, &anchors, &store.docs())?;
            let train: Vec<(&EmbeddingMatrix, bool)> = labels
                .train
                .iter()
                .zip(&labels.train_labels)
                .map(|(id, &l)| (store.embedding(id), l))
                .collect();
            let exp = expand_keylines(
                t,
                &list,
                &anchors,
                &train,
                &self.config.cv_config(seed),
                &self.config.trainer,
            )?;
            let mut opt = list.keyline_set(&anchors, Stage::Optimal, exp.max_expansion);
            opt.inputs = self.hash_inputs(&[all_path, self.layout.split(), self.config.data.dataset.clone()])?;
            write_atomic(&self.layout.keylines(t, Stage::Optimal), opt.to_toml()?.as_bytes())?;
            let mut buf = Vec::new();
            write_trajectory(&mut buf, &exp.trajectory)?;
            write_atomic(&self.layout.trajectory(t), &buf)?;
            outcome.note(format!(
                "{t}: kept {} of {} candidates, mean CV AUC {:.4} (anchor only {:.4})",
                exp.max_expansion,
                list.len(),
                exp.best_auc,
                exp.trajectory[0].mean_auc
            ));
        }
        Ok(outcome)
    }

    /// Fit one model per task on the configured feature subset.
    pub fn train(&self, tasks: &[Typology]) -> Result<Outcome, PipelineError> {
        let seed = self.seed()?;
        let records = self.records()?;
        let split = self.split(&records, tasks[0], seed)?;
        let anchors = self.anchors()?;
        let mut outcome = Outcome::default();
        for &t in tasks {
            let labels = split.for_task(&records, t.into())?;
            let subset = self.config.train_subset(t);
            let (sets, files) = self.feature_sets(&Self::columns_of([&subset]), &anchors)?;
            let with_density = subset.columns().contains(&FeatureColumn::Density);
            let part = self.partition(&records, &labels, &sets, with_density)?;
            let mut model = train_model(t.into(), &subset, &part.train, &labels.train_labels, &self.config.trainer, seed)?;
            model.encoder_id = self.encoder.id().to_string();
            model.density = part.density;
            let mut inputs = files;
            inputs.extend([self.layout.split(), self.layout.infobox(), self.config.data.dataset.clone()]);
            model.inputs = self.hash_inputs(&inputs)?;
            let scores: Vec<f64> = part.test.iter().map(|c| model.predict_city(c)).collect();
            let (test_auc, test) = if labels.test_labels.iter().any(|&l| l) && labels.test_labels.iter().any(|&l| !l) {
                (
                    Some(roc_auc(&scores, &labels.test_labels)?),
                    Some(classification_scores(&scores, &labels.test_labels, model.threshold)?),
                )
            } else {
                log::warn!("{t}: test set has a single class; no test AUC");
                (None, None)
            };
            model.metrics.test_auc = test_auc;
            self.save_model(&self.layout.model(t.into()), &model)?;
            self.write_train_predictions(
                &self.layout.train_predictions(t.into()),
                &labels.train,
                &labels.train_labels,
                &model,
                &part.train,
            )?;
            let report = TaskReport {
                task: t.into(),
                features: subset.to_string(),
                n_train: labels.train.len(),
                n_test: labels.test.len(),
                threshold: model.threshold,
                train_auc: model.metrics.train_auc,
                train_gmean: model.metrics.train_gmean,
                test_auc,
                test,
            };
            self.write_toml(&self.layout.metrics(t.into()), &report)?;
            outcome.note(format!(
                "{t}: train AUC {:.4}, test AUC {}, threshold {:.4}",
                report.train_auc,
                test_auc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
                model.threshold
            ));
        }
        if self.config.train.sweep {
            let sweep = self.sweep(tasks)?;
            for line in sweep.summary {
                outcome.summary.push(line);
            }
        }
        Ok(outcome)
    }

    /// Test AUC of all 21 comparison subsets per task.
    pub fn sweep(&self, tasks: &[Typology]) -> Result<Outcome, PipelineError> {
        let seed = self.seed()?;
        let records = self.records()?;
        let split = self.split(&records, tasks[0], seed)?;
        let anchors = self.anchors()?;
        let mut outcome = Outcome::default();
        for &t in tasks {
            let labels = split.for_task(&records, t.into())?;
            let subsets = sweep_subsets(t);
            let (sets, _) = self.feature_sets(&Self::columns_of(&subsets), &anchors)?;
            let part = self.partition(&records, &labels, &sets, true)?;
            let rows = subset_sweep(
                t,
                &part.train,
                &labels.train_labels,
                &part.test,
                &labels.test_labels,
                &self.config.trainer,
                seed,
            )?;
            let mut buf = Vec::new();
            write_sweep_report(&mut buf, &rows)?;
            write_atomic(&self.layout.sweep(t), &buf)?;
            let best = rows
                .iter()
                .max_by(|a, b| a.test_auc.total_cmp(&b.test_auc).then(b.row.cmp(&a.row)))
                .expect("21 rows");
            outcome.note(format!(
                "{t}: baseline test AUC {:.4}; best row {} ({}) {:.4}, lift {:+.1}%",
                rows[0].test_auc, best.row, best.features, best.test_auc, best.lift_pct
            ));
        }
        Ok(outcome)
    }

    /// Load the four typology models and the keyline sets they read.
    pub fn scorer(&self) -> Result<Scorer, PipelineError> {
        let mut models = Vec::with_capacity(4);
        for t in Typology::ALL {
            let path = self.layout.model(t.into());
            require(&path, "train")?;
            let m = TrainedModel::load(&path)?;
            if m.task != t.into() {
                return Err(ModelError::Format(format!("{} holds a {} model", path.display(), m.task)).into());
            }
            self.verify(&path, &m.inputs, "train")?;
            models.push(m);
        }
        let anchors = self.anchors()?;
        let (sets, _) = self.feature_sets(&Self::columns_of(models.iter().map(|m| &m.features)), &anchors)?;
        Ok(Scorer {
            models,
            sets,
            infobox: self.infobox()?,
        })
    }

    /// Score one city with already loaded models.
    pub fn score(&self, scorer: &Scorer, entry: &DatasetEntry) -> Result<PredictionRow, PipelineError> {
        let sentences = self.sentences(&entry.city_id)?.ok_or_else(|| PipelineError::MissingArtifact {
            path: self.layout.sentences(&entry.city_id),
            hint: "ingest".into(),
        })?;
        let cache = self.embedding_cache();
        let emb = cache
            .load(&entry.city_id, self.encoder.id(), self.encoder.dim(), &sentences)?
            .ok_or_else(|| PipelineError::MissingArtifact {
                path: cache.path_for(&entry.city_id, self.encoder.id()),
                hint: "embed".into(),
            })?;
        let info = scorer.infobox.get(&entry.city_id);
        let mut features = city_features(&emb, &scorer.sets, f64::NAN)?;
        let mut p = [0.0; 4];
        let mut label = [false; 4];
        for (i, m) in scorer.models.iter().enumerate() {
            features.density = m
                .density
                .map(|n| n.transform(info.and_then(|r| r.density_per_sq_mi)))
                .unwrap_or(f64::NAN);
            p[i] = m.predict_city(&features);
            label[i] = m.label(p[i]);
        }
        Ok(PredictionRow {
            city_id: entry.city_id.clone(),
            name: entry.name.clone(),
            lat: entry.lat.or(info.and_then(|r| r.lat)),
            lon: entry.lon.or(info.and_then(|r| r.lon)),
            p,
            label,
        })
    }

    /// Single-city prediction by id from the predict list.
    pub fn predict_city(&self, city_id: &str) -> Result<PredictionRow, PipelineError> {
        let entry = self
            .predict_entries()?
            .into_iter()
            .find(|e| e.city_id == city_id)
            .ok_or_else(|| CorpusError::UnknownCity(city_id.to_string()))?;
        self.score(&self.scorer()?, &entry)
    }

    /// Score every city of the predict list.
    pub fn predict(&self) -> Result<Outcome, PipelineError> {
        let scorer = self.scorer()?;
        let entries = self.predict_entries()?;
        let results: Vec<Result<PredictionRow, PipelineError>> =
            entries.par_iter().map(|e| self.score(&scorer, e)).collect();
        let mut outcome = Outcome::default();
        let mut rows = Vec::with_capacity(entries.len());
        let mut failures = String::from("city_id,name,kind,reason\n");
        let mut missing_pages = 0usize;
        for (e, r) in entries.iter().zip(results) {
            match r {
                Ok(row) => rows.push(row),
                Err(err) => {
                    let kind = match &err {
                        PipelineError::MissingArtifact { hint, .. } if hint == "ingest" => {
                            missing_pages += 1;
                            "missing_page"
                        }
                        PipelineError::MissingArtifact { .. } => "missing_embeddings",
                        _ => "error",
                    };
                    let _ = writeln!(
                        failures,
                        "{},{},{kind},{}",
                        csv_field(&e.city_id),
                        csv_field(&e.name),
                        csv_field(&err.to_string())
                    );
                    outcome.fail(&e.city_id, err.to_string());
                }
            }
        }
        let mut buf = Vec::new();
        write_predictions(&mut buf, &rows)?;
        write_atomic(&self.layout.predictions(), &buf)?;
        write_atomic(&self.layout.prediction_failures(), failures.as_bytes())?;
        outcome.note(format!(
            "scored {} of {} cities into {}",
            rows.len(),
            entries.len(),
            self.layout.predictions().display()
        ));
        if outcome.is_partial() {
            outcome.note(format!(
                "{} cities skipped ({missing_pages} without a page); see {}",
                outcome.failures.len(),
                self.layout.prediction_failures().display()
            ));
        }
        Ok(outcome)
    }

    /// Via odds ratios per typology and the Via-presence model.
    pub fn feasibility(&self) -> Result<Outcome, PipelineError> {
        let seed = self.seed()?;
        let records: Vec<CityRecord> = self
            .records()?
            .into_iter()
            .filter(|r| r.via_city.is_some())
            .collect();
        if records.is_empty() {
            return Err(PipelineError::Config(
                "no city carries a Via flag; set data.via_list or fill the via_flag column".into(),
            ));
        }
        let split = build_split(&records, LabelTask::Via, &self.config.split_config(seed))?;
        let mut buf = Vec::new();
        split.write_membership(&mut buf)?;
        write_atomic(&self.layout.via_split(), &buf)?;

        let by_id: HashMap<&str, &CityRecord> = records.iter().map(|r| (r.city_id.as_str(), r)).collect();
        let train_records: Vec<&CityRecord> = split.train.iter().map(|id| by_id[id.as_str()]).collect();
        let ratios = ratio_report(&train_records);
        let mut buf = Vec::new();
        write_ratio_report(&mut buf, &ratios)?;
        write_atomic(&self.layout.ratios(), &buf)?;

        let anchors = self.anchors()?;
        let subset = feasibility_subset();
        let (sets, files) = self.feature_sets(&Self::columns_of([&subset]), &anchors)?;
        let part = self.partition(&records, &split, &sets, true)?;
        let (mut model, metrics) = train_feasibility_model(
            &part.train,
            &split.train_labels,
            &part.test,
            &split.test_labels,
            &self.config.trainer,
            seed,
        )?;
        model.encoder_id = self.encoder.id().to_string();
        model.density = part.density;
        let mut inputs = files;
        inputs.extend([self.layout.via_split(), self.layout.infobox(), self.config.data.dataset.clone()]);
        if let Some(p) = &self.config.data.via_list {
            inputs.push(p.clone());
        }
        model.inputs = self.hash_inputs(&inputs)?;
        self.save_model(&self.layout.model(LabelTask::Via), &model)?;
        self.write_toml(&self.layout.metrics(LabelTask::Via), &metrics)?;
        self.write_train_predictions(
            &self.layout.train_predictions(LabelTask::Via),
            &split.train,
            &split.train_labels,
            &model,
            &part.train,
        )?;

        let mut outcome = Outcome::default();
        for r in &ratios {
            match r.ratio {
                Some(x) => outcome.note(format!("P(Via | {}) / P(Via | not {}) = {x:.3}", r.typology, r.typology)),
                None => outcome.note(format!("{}: {}", r.typology, r.note)),
            }
        }
        outcome.note(format!(
            "Via model: train AUC {:.4}, test AUC {:.4} ({} train, {} test cities)",
            metrics.train_auc, metrics.test_auc, metrics.n_train, metrics.n_test
        ));
        Ok(outcome)
    }
}

/// Quote a CSV field when needed.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
