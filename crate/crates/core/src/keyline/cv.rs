//! Repeated k-fold cross-validation with deterministic fold draws.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::KeylineError;
use crate::model::{fit_logistic, roc_auc, sigmoid, TrainerConfig};

const MAX_FOLD_ATTEMPTS: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stratified")]
    pub stratified: bool,
}

fn default_folds() -> usize {
    3
}

fn default_repeats() -> usize {
    3
}

fn default_stratified() -> bool {
    true
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: default_folds(),
            repeats: default_repeats(),
            seed: 0,
            stratified: default_stratified(),
        }
    }
}

/// Fold index of every sample, one assignment per repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: usize,
    pub assignments: Vec<Vec<usize>>,
    /// Seed that produced a plan with two classes on both sides of every split.
    pub seed: u64,
}

impl FoldPlan {
    pub fn new(labels: &[bool], cfg: &CvConfig) -> Result<Self, KeylineError> {
        if cfg.folds < 2 || cfg.repeats == 0 {
            return Err(KeylineError::DegenerateFolds {
                attempts: 0,
                reason: format!("{} folds x {} repeats", cfg.folds, cfg.repeats),
            });
        }
        let mut reason = String::new();
        for attempt in 0..MAX_FOLD_ATTEMPTS {
            let seed = cfg.seed.wrapping_add(attempt);
            let plan = Self::draw(labels, cfg, seed);
            match plan.degenerate(labels) {
                None => return Ok(plan),
                Some(r) => {
                    log::debug!("fold draw with seed {seed} rejected: {r}");
                    reason = r;
                }
            }
        }
        Err(KeylineError::DegenerateFolds {
            attempts: MAX_FOLD_ATTEMPTS,
            reason,
        })
    }

    fn draw(labels: &[bool], cfg: &CvConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = labels.len();
        let assignments = (0..cfg.repeats)
            .map(|_| {
                let mut fold = vec![0; n];
                if cfg.stratified {
                    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
                    let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
                    pos.shuffle(&mut rng);
                    neg.shuffle(&mut rng);
                    for (k, &i) in pos.iter().chain(&neg).enumerate() {
                        fold[i] = k % cfg.folds;
                    }
                } else {
                    let mut idx: Vec<usize> = (0..n).collect();
                    idx.shuffle(&mut rng);
                    for (k, &i) in idx.iter().enumerate() {
                        fold[i] = k % cfg.folds;
                    }
                }
                fold
            })
            .collect();
        FoldPlan {
            folds: cfg.folds,
            assignments,
            seed,
        }
    }

    fn degenerate(&self, labels: &[bool]) -> Option<String> {
        for (r, assign) in self.assignments.iter().enumerate() {
            for f in 0..self.folds {
                let (mut vp, mut vn, mut tp, mut tn) = (0, 0, 0, 0);
                for (i, &l) in labels.iter().enumerate() {
                    match (assign[i] == f, l) {
                        (true, true) => vp += 1,
                        (true, false) => vn += 1,
                        (false, true) => tp += 1,
                        (false, false) => tn += 1,
                    }
                }
                if vp == 0 || vn == 0 || tp == 0 || tn == 0 {
                    return Some(format!("repeat {r} fold {f} has a single-class side"));
                }
            }
        }
        None
    }

    /// `(repeat, fold)` cells in evaluation order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        (0..self.assignments.len())
            .flat_map(|r| (0..self.folds).map(move |f| (r, f)))
            .collect()
    }
}

/// Mean validation AUC over every fold of every repeat.
pub fn cv_mean_auc(
    x: &[Vec<f64>],
    y: &[bool],
    plan: &FoldPlan,
    trainer: &TrainerConfig,
) -> Result<f64, KeylineError> {
    let aucs: Vec<f64> = plan
        .cells()
        .par_iter()
        .map(|&(r, f)| {
            let assign = &plan.assignments[r];
            let (mut xt, mut yt, mut xv, mut yv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..x.len() {
                if assign[i] == f {
                    xv.push(x[i].as_slice());
                    yv.push(y[i]);
                } else {
                    xt.push(x[i].clone());
                    yt.push(y[i]);
                }
            }
            let fit = fit_logistic(&xt, &yt, trainer)?;
            let scores: Vec<f64> = xv
                .iter()
                .map(|row| sigmoid(row.iter().zip(&fit.weights).map(|(a, b)| a * b).sum::<f64>() + fit.bias))
                .collect();
            Ok(roc_auc(&scores, &yv)?)
        })
        .collect::<Result<_, KeylineError>>()?;
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_folds_balance_classes() {
        let labels: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let plan = FoldPlan::new(&labels, &CvConfig::default()).unwrap();
        assert_eq!(plan.assignments.len(), 3);
        for assign in &plan.assignments {
            for f in 0..3 {
                let pos = (0..30).filter(|&i| assign[i] == f && labels[i]).count();
                let all = assign.iter().filter(|&&a| a == f).count();
                assert_eq!((pos, all), (10 / 3 + usize::from(f < 10 % 3), 10));
            }
        }
        assert_eq!(plan, FoldPlan::new(&labels, &CvConfig::default()).unwrap());
    }

    #[test]
    fn too_few_positives_is_reported() {
        let labels = [true, true, false, false, false, false];
        assert!(matches!(
            FoldPlan::new(&labels, &CvConfig::default()),
            Err(KeylineError::DegenerateFolds { .. })
        ));
    }

    #[test]
    fn unstratified_draws_reshuffle_until_valid() {
        let labels: Vec<bool> = (0..12).map(|i| i < 3).collect();
        let cfg = CvConfig { stratified: false, ..Default::default() };
        let plan = FoldPlan::new(&labels, &cfg).unwrap();
        assert!(plan.degenerate(&labels).is_none());
        assert!(plan.seed >= cfg.seed);
    }

    #[test]
    fn perfect_feature_scores_one() {
        let y: Vec<bool> = (0..18).map(|i| i % 2 == 0).collect();
        let x: Vec<Vec<f64>> = y.iter().map(|&l| vec![if l { 0.9 } else { 0.1 }]).collect();
        let plan = FoldPlan::new(&y, &CvConfig::default()).unwrap();
        assert_eq!(cv_mean_auc(&x, &y, &plan, &TrainerConfig::default()).unwrap(), 1.0);
    }
}
