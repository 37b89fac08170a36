//! Test AUC of every comparison subset for one typology task.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{sweep_subsets, CityFeatures, FeatureSubset};
use super::logistic::TrainerConfig;
use super::metrics::roc_auc;
use super::trained::train_model;
use super::ModelError;
use crate::typology::Typology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub row: usize,
    pub features: String,
    pub test_auc: f64,
    pub lift_pct: f64,
}

/// Train each of the 21 subsets on the train cities and score the test cities.
/// Lift is relative to row 0, the anchor-only baseline.
pub fn subset_sweep(
    task: Typology,
    train: &[CityFeatures],
    train_labels: &[bool],
    test: &[CityFeatures],
    test_labels: &[bool],
    config: &TrainerConfig,
    seed: u64,
) -> Result<Vec<SweepRow>, ModelError> {
    let subsets = sweep_subsets(task);
    let aucs: Vec<f64> = subsets
        .par_iter()
        .map(|s| subset_test_auc(task, s, train, train_labels, test, test_labels, config, seed))
        .collect::<Result<_, _>>()?;
    let baseline = aucs[0];
    Ok(subsets
        .iter()
        .zip(&aucs)
        .enumerate()
        .map(|(i, (s, &auc))| SweepRow {
            row: i + 1,
            features: s.to_string(),
            test_auc: auc,
            lift_pct: (auc - baseline) / baseline * 100.0,
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn subset_test_auc(
    task: Typology,
    subset: &FeatureSubset,
    train: &[CityFeatures],
    train_labels: &[bool],
    test: &[CityFeatures],
    test_labels: &[bool],
    config: &TrainerConfig,
    seed: u64,
) -> Result<f64, ModelError> {
    let model = train_model(task.into(), subset, train, train_labels, config, seed)?;
    let scores: Vec<f64> = test.iter().map(|c| model.predict_city(c)).collect();
    roc_auc(&scores, test_labels)
}

pub fn write_sweep_report<W: Write>(writer: W, rows: &[SweepRow]) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| ModelError::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| ModelError::Format(e.to_string()))
}

pub fn read_sweep_report<R: Read>(reader: R) -> Result<Vec<SweepRow>, ModelError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| ModelError::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cities(n: usize, rng: &mut ChaCha8Rng) -> (Vec<CityFeatures>, Vec<bool>) {
        let mut cities = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % 3 == 0;
            let mut keyline = [[0.0; 3]; 4];
            for row in keyline.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.gen_range(0.2..0.6);
                }
            }
            // Signal only in the optimal congestion feature.
            keyline[0][1] += if y { 0.25 } else { 0.0 };
            cities.push(CityFeatures { keyline, density: rng.gen() });
            labels.push(y);
        }
        (cities, labels)
    }

    #[test]
    fn baseline_lift_zero_and_rows_match_standalone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (train, ytr) = random_cities(60, &mut rng);
        let (test, yte) = random_cities(30, &mut rng);
        let cfg = TrainerConfig::default();
        let rows = subset_sweep(Typology::Congestion, &train, &ytr, &test, &yte, &cfg, 5).unwrap();
        assert_eq!(rows.len(), 21);
        assert_eq!(rows[0].lift_pct, 0.0);
        let subset: FeatureSubset = rows[12].features.parse().unwrap();
        let alone =
            subset_test_auc(Typology::Congestion, &subset, &train, &ytr, &test, &yte, &cfg, 5).unwrap();
        assert!((alone - rows[12].test_auc).abs() <= 1e-12);
        let mut buf = Vec::new();
        write_sweep_report(&mut buf, &rows).unwrap();
        assert_eq!(read_sweep_report(buf.as_slice()).unwrap(), rows);
    }
}
