//! Greedy prefix expansion of a keyline set scored by cross-validated AUC.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::anchors::Anchors;
use super::candidates::CandidateList;
use super::cv::{cv_mean_auc, CvConfig, FoldPlan};
use super::KeylineError;
use crate::embedding::EmbeddingMatrix;
use crate::model::TrainerConfig;
use crate::typology::Typology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub e: usize,
    pub mean_auc: f64,
    pub lift_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub typology: Typology,
    /// Number of candidates kept after the anchor.
    pub max_expansion: usize,
    pub best_auc: f64,
    /// One point per prefix length, starting with the anchor-only `e = 0`.
    pub trajectory: Vec<TrajectoryPoint>,
    pub fold_seed: u64,
}

/// Per-city similarity tables that make every prefix feature a running max.
struct CityTable {
    anchor: [f64; 4],
    candidate: Vec<f64>,
}

fn city_table(city: &EmbeddingMatrix, anchors: &Anchors, candidates: &EmbeddingMatrix) -> Result<CityTable, KeylineError> {
    if city.is_empty() {
        return Err(KeylineError::EmptyPage(city.city_id().to_string()));
    }
    let a = anchors.matrix();
    let mut anchor = [f64::NEG_INFINITY; 4];
    let mut candidate = vec![f64::NEG_INFINITY; candidates.rows()];
    for i in 0..city.rows() {
        for (k, slot) in anchor.iter_mut().enumerate() {
            *slot = slot.max(city.row_similarity(i, a, k));
        }
        for (k, slot) in candidate.iter_mut().enumerate() {
            *slot = slot.max(city.row_similarity(i, candidates, k));
        }
    }
    Ok(CityTable { anchor, candidate })
}

/// Greedy keyline-set expansion. At prefix length `e` the task feature uses
/// the anchor plus the first `e` candidates and the other three typologies use
/// their anchors alone. The kept prefix is the first `e` whose mean validation
/// AUC strictly beats every shorter prefix, starting from the anchor-only score.
pub fn expand_keylines(
    typology: Typology,
    candidates: &CandidateList,
    anchors: &Anchors,
    train: &[(&EmbeddingMatrix, bool)],
    cv: &CvConfig,
    trainer: &TrainerConfig,
) -> Result<Expansion, KeylineError> {
    if candidates.is_empty() {
        return Err(KeylineError::NoCandidates(typology));
    }
    let labels: Vec<bool> = train.iter().map(|&(_, l)| l).collect();
    if !labels.iter().any(|&l| l) {
        return Err(KeylineError::NoPositives(typology));
    }
    let plan = FoldPlan::new(&labels, cv)?;
    let tables: Vec<CityTable> = train
        .par_iter()
        .map(|&(m, _)| city_table(m, anchors, candidates.embeddings()))
        .collect::<Result<_, _>>()?;

    let mut task_feature: Vec<f64> = tables.iter().map(|t| t.anchor[typology.index()]).collect();
    let mut trajectory = Vec::with_capacity(candidates.len() + 1);
    let mut best = (0, f64::NEG_INFINITY);
    for e in 0..=candidates.len() {
        if e > 0 {
            for (f, t) in task_feature.iter_mut().zip(&tables) {
                *f = f.max(t.candidate[e - 1]);
            }
        }
        let x: Vec<Vec<f64>> = tables
            .iter()
            .zip(&task_feature)
            .map(|(t, &f)| {
                let mut row = t.anchor.to_vec();
                row[typology.index()] = f;
                row
            })
            .collect();
        let auc = cv_mean_auc(&x, &labels, &plan, trainer)?;
        let base = trajectory.first().map_or(auc, |p: &TrajectoryPoint| p.mean_auc);
        trajectory.push(TrajectoryPoint {
            e,
            mean_auc: auc,
            lift_pct: (auc - base) / base * 100.0,
        });
        if auc > best.1 {
            best = (e, auc);
        }
        log::debug!("{typology} e={e} mean AUC {auc:.4}");
    }
    Ok(Expansion {
        typology,
        max_expansion: best.0,
        best_auc: best.1,
        trajectory,
        fold_seed: plan.seed,
    })
}

pub fn write_trajectory<W: Write>(writer: W, points: &[TrajectoryPoint]) -> Result<(), KeylineError> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p).map_err(|e| KeylineError::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| KeylineError::Format(e.to_string()))
}

pub fn read_trajectory<R: Read>(reader: R) -> Result<Vec<TrajectoryPoint>, KeylineError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| KeylineError::Format(e.to_string()))
}
