//! Ranking and thresholded classification metrics.

use serde::{Deserialize, Serialize};

use super::ModelError;

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(u64, u64), ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(ModelError::NonFinite("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(ModelError::SingleClass);
    }
    Ok((pos, neg))
}

/// Area under the ROC curve as `P(pos > neg) + P(pos == neg) / 2`, counted
/// over tie groups after sorting.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, ModelError> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the number of winning pairs plus ties, kept integral.
    let mut twice_wins: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        twice_wins += 2 * p * neg_below + p * q;
        neg_below += q;
        i = j;
    }
    Ok(twice_wins as f64 / (2 * pos as u128 * neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmeanThreshold {
    pub threshold: f64,
    pub gmean: f64,
    pub tpr: f64,
    pub tnr: f64,
}

/// Candidate cut points: midpoints between consecutive distinct values of
/// `{0, 1} ∪ scores`. A score strictly above the cut is predicted positive.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = scores.iter().copied().chain([0.0, 1.0]).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

fn gmean_from_counts(tp: u64, tn: u64, pos: u64, neg: u64) -> f64 {
    ((tp as u128 * tn as u128) as f64 / (pos as u128 * neg as u128) as f64).sqrt()
}

/// Threshold maximizing `sqrt(TPR * TNR)` over [`threshold_candidates`];
/// ties go to the lowest threshold. Scores must be probabilities.
pub fn gmean_threshold(scores: &[f64], labels: &[bool]) -> Result<GmeanThreshold, ModelError> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(ModelError::Shape("scores must lie in [0, 1]".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut best: Option<GmeanThreshold> = None;
    // Walk cut points upwards; `k` indexes the first score above the cut.
    let (mut tn, mut fn_) = (0u64, 0u64);
    let mut k = 0;
    for t in threshold_candidates(scores) {
        while k < order.len() && scores[order[k]] <= t {
            if labels[order[k]] {
                fn_ += 1;
            } else {
                tn += 1;
            }
            k += 1;
        }
        let tp = pos - fn_;
        let g = gmean_from_counts(tp, tn, pos, neg);
        if best.is_none_or(|b| g > b.gmean) {
            best = Some(GmeanThreshold {
                threshold: t,
                gmean: g,
                tpr: tp as f64 / pos as f64,
                tnr: tn as f64 / neg as f64,
            });
        }
    }
    Ok(best.expect("at least one candidate threshold"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn at(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s > threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassificationScores {
    pub fn from_confusion(c: &Confusion) -> Self {
        let total = (c.tp + c.fp + c.tn + c.fn_) as f64;
        let accuracy = if total > 0.0 {
            (c.tp + c.tn) as f64 / total
        } else {
            0.0
        };
        let precision = if c.tp + c.fp == 0 {
            log::warn!("no predicted positives; precision defined as 0");
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fp) as f64
        };
        let recall = if c.tp + c.fn_ == 0 {
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassificationScores {
            accuracy,
            precision,
            recall,
            f1,
        }
    }
}

/// Accuracy, precision, recall and F1 with `score > threshold` as positive.
pub fn classification_scores(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ClassificationScores, ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ModelError::Shape(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(ClassificationScores::from_confusion(&Confusion::at(
        scores, labels, threshold,
    )))
}
