//! Microtransit feasibility: how typologies shift the odds of Via service, and
//! a Via-presence classifier over the same Wikipedia features.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::CityRecord;
use crate::model::{
    roc_auc, train_model, CityFeatures, FeatureColumn, FeatureSubset, ModelError, TrainedModel,
    TrainerConfig,
};
use crate::typology::{LabelTask, Stage, Typology};

#[derive(Debug, thiserror::Error)]
pub enum FeasibilityError {
    #[error("ratio undefined: {cell} is zero")]
    UndefinedRatio { cell: &'static str },
    #[error("via list line {line}: {reason}")]
    ViaList { line: usize, reason: String },
    #[error("city {0} has no via flag")]
    MissingFlag(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report error: {0}")]
    Report(String),
}

/// Via presence crossed with membership in one typology.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// Via and typology.
    pub via_t: u64,
    /// Via, other typology.
    pub via_not_t: u64,
    /// No Via, typology.
    pub novia_t: u64,
    /// No Via, other typology.
    pub novia_not_t: u64,
}

impl ContingencyTable {
    pub fn n_t(&self) -> u64 {
        self.via_t + self.novia_t
    }

    pub fn n_not_t(&self) -> u64 {
        self.via_not_t + self.novia_not_t
    }

    pub fn total(&self) -> u64 {
        self.n_t() + self.n_not_t()
    }

    /// Counts over cities carrying both a typology label and a Via flag.
    pub fn from_records<'a, I>(records: I, typology: Typology) -> Self
    where
        I: IntoIterator<Item = &'a CityRecord>,
    {
        let mut t = ContingencyTable::default();
        for r in records {
            let (Some(label), Some(via)) = (r.typology_label, r.via_city) else {
                continue;
            };
            match (via, label == typology) {
                (true, true) => t.via_t += 1,
                (true, false) => t.via_not_t += 1,
                (false, true) => t.novia_t += 1,
                (false, false) => t.novia_not_t += 1,
            }
        }
        t
    }

    /// Same cities with Via and non-Via swapped.
    pub fn swap_via(&self) -> Self {
        ContingencyTable {
            via_t: self.novia_t,
            via_not_t: self.novia_not_t,
            novia_t: self.via_t,
            novia_not_t: self.via_not_t,
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `P(V | T) / P(V | not T)` from counts, reduced to lowest terms before the
/// single floating-point division.
pub fn bayes_ratio(t: &ContingencyTable) -> Result<f64, FeasibilityError> {
    if t.n_t() == 0 {
        return Err(FeasibilityError::UndefinedRatio { cell: "n(T)" });
    }
    if t.n_not_t() == 0 {
        return Err(FeasibilityError::UndefinedRatio { cell: "n(not T)" });
    }
    if t.via_not_t == 0 {
        return Err(FeasibilityError::UndefinedRatio { cell: "n(V and not T)" });
    }
    let num = t.via_t as u128 * t.n_not_t() as u128;
    let den = t.n_t() as u128 * t.via_not_t as u128;
    let g = gcd(num, den).max(1);
    Ok((num / g) as f64 / (den / g) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub typology: Typology,
    pub ratio: Option<f64>,
    pub via_t: u64,
    pub via_not_t: u64,
    pub novia_t: u64,
    pub novia_not_t: u64,
    pub note: String,
}

pub fn ratio_report(records: &[&CityRecord]) -> Vec<RatioRow> {
    Typology::ALL
        .iter()
        .map(|&t| {
            let c = ContingencyTable::from_records(records.iter().copied(), t);
            let (ratio, note) = match bayes_ratio(&c) {
                Ok(r) => (Some(r), String::new()),
                Err(e) => (None, e.to_string()),
            };
            RatioRow {
                typology: t,
                ratio,
                via_t: c.via_t,
                via_not_t: c.via_not_t,
                novia_t: c.novia_t,
                novia_not_t: c.novia_not_t,
                note,
            }
        })
        .collect()
}

pub fn write_ratio_report<W: Write>(writer: W, rows: &[RatioRow]) -> Result<(), FeasibilityError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| FeasibilityError::Report(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// One Via city per line: a name followed by its Wikipedia URL. Blank lines
/// and lines starting with `#` are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViaEntry {
    pub name: String,
    pub url: String,
}

pub fn read_via_list<R: BufRead>(reader: R) -> Result<Vec<ViaEntry>, FeasibilityError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let split = line
            .rfind(|c: char| c == '\t' || c == ',' || c == ' ')
            .ok_or_else(|| FeasibilityError::ViaList {
                line: i + 1,
                reason: "expected a name and a URL".into(),
            })?;
        let url = line[split + 1..].trim();
        let name = line[..split].trim().trim_end_matches([',', '\t']).trim();
        if !url.contains("://") || name.is_empty() {
            return Err(FeasibilityError::ViaList {
                line: i + 1,
                reason: format!("cannot read {line:?} as name and URL"),
            });
        }
        out.push(ViaEntry {
            name: name.to_string(),
            url: url.to_string(),
        });
    }
    Ok(out)
}

fn url_key(url: &str) -> String {
    let u = url.trim().trim_end_matches('/');
    let u = u
        .strip_prefix("https://")
        .or_else(|| u.strip_prefix("http://"))
        .unwrap_or(u);
    u.replace(' ', "_").to_lowercase()
}

/// Set every record's Via flag from the list; returns list entries that
/// matched no record.
pub fn apply_via_list(records: &mut [CityRecord], list: &[ViaEntry]) -> Vec<ViaEntry> {
    let keys: HashSet<String> = list.iter().map(|v| url_key(&v.url)).collect();
    let mut matched = HashSet::new();
    for r in records.iter_mut() {
        let k = url_key(&r.url);
        let via = keys.contains(&k);
        if via {
            matched.insert(k);
        }
        r.via_city = Some(via);
    }
    list.iter()
        .filter(|v| !matched.contains(&url_key(&v.url)))
        .cloned()
        .collect()
}

/// Optimal keyline features for all four typologies plus density.
pub fn feasibility_subset() -> FeatureSubset {
    let mut cols: Vec<FeatureColumn> = Typology::ALL
        .iter()
        .map(|&t| FeatureColumn::Keyline(t, Stage::Optimal))
        .collect();
    cols.push(FeatureColumn::Density);
    FeatureSubset::new(cols).expect("five distinct columns")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityMetrics {
    pub train_auc: f64,
    pub test_auc: f64,
    pub n_train: usize,
    pub n_test: usize,
}

pub fn train_feasibility_model(
    train: &[CityFeatures],
    train_labels: &[bool],
    test: &[CityFeatures],
    test_labels: &[bool],
    trainer: &TrainerConfig,
    seed: u64,
) -> Result<(TrainedModel, FeasibilityMetrics), FeasibilityError> {
    let mut model = train_model(LabelTask::Via, &feasibility_subset(), train, train_labels, trainer, seed)?;
    let scores: Vec<f64> = test.iter().map(|c| model.predict_city(c)).collect();
    let test_auc = roc_auc(&scores, test_labels)?;
    model.metrics.test_auc = Some(test_auc);
    let metrics = FeasibilityMetrics {
        train_auc: model.metrics.train_auc,
        test_auc,
        n_train: train.len(),
        n_test: test.len(),
    };
    Ok((model, metrics))
}

/// Via flag by city id; every listed city must carry one.
pub fn via_labels(records: &[CityRecord]) -> Result<BTreeMap<String, bool>, FeasibilityError> {
    records
        .iter()
        .map(|r| {
            r.via_city
                .map(|v| (r.city_id.clone(), v))
                .ok_or_else(|| FeasibilityError::MissingFlag(r.city_id.clone()))
        })
        .collect()
}
