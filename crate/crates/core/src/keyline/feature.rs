//! Max-pooled similarity between a page and a keyline set.

use super::KeylineError;
use crate::embedding::{EmbedError, EmbeddingMatrix};
use crate::model::{CityFeatures, FeatureVector};
use crate::typology::{Stage, Typology};

/// Largest cosine similarity between any page sentence and any keyline.
pub fn keyline_feature(city: &EmbeddingMatrix, keys: &EmbeddingMatrix) -> Result<f64, KeylineError> {
    if city.is_empty() {
        return Err(KeylineError::EmptyPage(city.city_id().to_string()));
    }
    if keys.is_empty() {
        return Err(KeylineError::EmptySet);
    }
    if city.dim() != keys.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: keys.dim(),
            got: city.dim(),
        }
        .into());
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..city.rows() {
        for k in 0..keys.rows() {
            best = best.max(city.row_similarity(i, keys, k));
        }
    }
    Ok(best)
}

/// Keyline matrices per typology and stage; stages a caller does not need
/// may be left out.
#[derive(Debug, Clone)]
pub struct FeatureSets {
    sets: Vec<Option<EmbeddingMatrix>>,
}

impl FeatureSets {
    pub fn build<F>(mut f: F) -> Result<Self, KeylineError>
    where
        F: FnMut(Typology, Stage) -> Result<Option<EmbeddingMatrix>, KeylineError>,
    {
        let mut sets = Vec::with_capacity(12);
        for t in Typology::ALL {
            for s in Stage::ALL {
                let m = f(t, s)?;
                if m.as_ref().is_some_and(EmbeddingMatrix::is_empty) {
                    return Err(KeylineError::EmptySet);
                }
                sets.push(m);
            }
        }
        Ok(FeatureSets { sets })
    }

    pub fn get(&self, t: Typology, s: Stage) -> Option<&EmbeddingMatrix> {
        self.sets[t.index() * 3 + s.index()].as_ref()
    }
}

/// `[f_c, f_a, f_t, f_b, density]` from one keyline set per typology.
pub fn feature_vector(
    city: &EmbeddingMatrix,
    sets: [&EmbeddingMatrix; 4],
    density: f64,
) -> Result<FeatureVector, KeylineError> {
    let mut keyline = [0.0; 4];
    for (slot, keys) in keyline.iter_mut().zip(sets) {
        *slot = keyline_feature(city, keys)?;
    }
    Ok(FeatureVector { keyline, density })
}

/// Keyline features for every available set plus the normalized density.
/// Entries for missing sets are NaN.
pub fn city_features(
    city: &EmbeddingMatrix,
    sets: &FeatureSets,
    density: f64,
) -> Result<CityFeatures, KeylineError> {
    let mut keyline = [[f64::NAN; 3]; 4];
    for t in Typology::ALL {
        for s in Stage::ALL {
            if let Some(keys) = sets.get(t, s) {
                keyline[t.index()][s.index()] = keyline_feature(city, keys)?;
            }
        }
    }
    Ok(CityFeatures { keyline, density })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine_similarity, similarity_matrix};

    fn m(id: &str, rows: Vec<Vec<f32>>) -> EmbeddingMatrix {
        let dim = rows[0].len();
        EmbeddingMatrix::from_rows(id, "test", dim, rows).unwrap()
    }

    #[test]
    fn identical_single_sentence_scores_one() {
        let v = vec![0.3, -0.2, 0.9];
        assert_eq!(keyline_feature(&m("x", vec![v.clone()]), &m("k", vec![v])).unwrap(), 1.0);
    }

    #[test]
    fn four_by_three_equals_pairwise_loop() {
        let page = vec![
            vec![1.0, 0.0, 0.0, 0.5],
            vec![0.2, 1.0, 0.1, 0.0],
            vec![0.0, 0.3, 1.0, -0.4],
            vec![-0.5, 0.5, 0.5, 0.5],
        ];
        let keys = vec![vec![0.1, 0.1, 0.9, 0.0], vec![0.7, 0.7, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]];
        let mut oracle = f64::NEG_INFINITY;
        for p in &page {
            for k in &keys {
                oracle = oracle.max(cosine_similarity(p, k).unwrap());
            }
        }
        let (pm, km) = (m("p", page), m("k", keys));
        let got = keyline_feature(&pm, &km).unwrap();
        assert!((got - oracle).abs() < 1e-6);
        assert_eq!(got, similarity_matrix(&pm, &km).unwrap().max().unwrap());
    }

    #[test]
    fn empty_inputs_are_errors() {
        let empty = EmbeddingMatrix::from_rows("e", "test", 3, vec![]).unwrap();
        let one = m("k", vec![vec![1.0, 0.0, 0.0]]);
        assert!(matches!(keyline_feature(&empty, &one), Err(KeylineError::EmptyPage(_))));
        assert!(matches!(keyline_feature(&one, &empty), Err(KeylineError::EmptySet)));
    }

    #[test]
    fn page_made_of_the_anchors_scores_one_everywhere() {
        let anchors = m(
            "a",
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
        );
        let singles: Vec<EmbeddingMatrix> = (0..4)
            .map(|i| EmbeddingMatrix::stack("s", [(&anchors, i)]).unwrap())
            .collect();
        let v = feature_vector(&anchors, [&singles[0], &singles[1], &singles[2], &singles[3]], 0.4)
            .unwrap();
        assert_eq!(v.as_array(), [1.0, 1.0, 1.0, 1.0, 0.4]);
    }
}
