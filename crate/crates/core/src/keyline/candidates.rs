//! Candidate keylines: the sentence of each positive page closest to the anchor.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::anchors::{Anchors, ANCHOR_CITY_ID};
use super::set::{CityDoc, Keyline, KeylineSet};
use super::KeylineError;
use crate::embedding::EmbeddingMatrix;
use crate::typology::{Stage, Typology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub source_city: String,
    pub sentence_index: usize,
    pub score: f64,
}

/// Argmax sentence against the anchor row; ties go to the lowest index.
/// `None` when the page has no sentences.
pub fn extract_candidate(
    doc: &CityDoc<'_>,
    anchors: &Anchors,
    typology: Typology,
) -> Result<Option<Candidate>, KeylineError> {
    let emb = doc.embeddings;
    if emb.rows() != doc.sentences.len() {
        return Err(KeylineError::Provenance(format!(
            "{} has {} sentences but {} embedding rows",
            doc.city_id,
            doc.sentences.len(),
            emb.rows()
        )));
    }
    if emb.dim() != anchors.matrix().dim() {
        return Err(crate::embedding::EmbedError::DimensionMismatch {
            expected: anchors.matrix().dim(),
            got: emb.dim(),
        }
        .into());
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 0..emb.rows() {
        let s = emb.row_similarity(i, anchors.matrix(), typology.index());
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    Ok(best.map(|(i, score)| Candidate {
        text: doc.sentences[i].clone(),
        source_city: doc.city_id.to_string(),
        sentence_index: i,
        score,
    }))
}

/// Candidates sorted by descending anchor similarity, exact-text duplicates
/// merged, with their embedding rows in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    pub typology: Typology,
    pub entries: Vec<Candidate>,
    embeddings: EmbeddingMatrix,
}

impl CandidateList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    /// Anchor followed by the first `prefix` candidates.
    pub fn keyline_set(&self, anchors: &Anchors, stage: Stage, prefix: usize) -> KeylineSet {
        let mut set = KeylineSet::anchor_only(anchors, self.typology);
        set.stage = stage;
        set.keylines.extend(self.entries[..prefix.min(self.len())].iter().map(|c| Keyline {
            text: c.text.clone(),
            source_city: Some(c.source_city.clone()),
            sentence_index: Some(c.sentence_index),
            anchor_similarity: Some(c.score),
        }));
        set
    }

    /// Matrix for the anchor plus the first `prefix` candidates.
    pub fn prefix_matrix(&self, anchors: &Anchors, prefix: usize) -> EmbeddingMatrix {
        let parts = std::iter::once((anchors.matrix(), self.typology.index()))
            .chain((0..prefix.min(self.len())).map(|i| (&self.embeddings, i)));
        EmbeddingMatrix::stack(ANCHOR_CITY_ID, parts).expect("anchor and candidates share a dimension")
    }

    /// Recover the list from an all-stage keyline set.
    pub fn from_set(set: &KeylineSet, anchors: &Anchors, docs: &[CityDoc<'_>]) -> Result<Self, KeylineError> {
        let full = set.resolve(anchors, docs)?;
        let mut entries = Vec::with_capacity(set.len().saturating_sub(1));
        for k in &set.keylines[1..] {
            entries.push(Candidate {
                text: k.text.clone(),
                source_city: k.source_city.clone().unwrap_or_default(),
                sentence_index: k.sentence_index.unwrap_or_default(),
                score: k.anchor_similarity.ok_or_else(|| {
                    KeylineError::Format(format!("candidate {:?} has no score", k.text))
                })?,
            });
        }
        let embeddings = EmbeddingMatrix::stack(ANCHOR_CITY_ID, (1..full.rows()).map(|i| (&full, i)))?;
        let embeddings = if entries.is_empty() {
            EmbeddingMatrix::from_rows(ANCHOR_CITY_ID, full.encoder_id(), full.dim(), vec![])?
        } else {
            embeddings
        };
        Ok(CandidateList {
            typology: set.typology,
            entries,
            embeddings,
        })
    }
}

/// One candidate per positive training page; pages without sentences are
/// skipped with a warning.
pub fn collect_candidates(
    typology: Typology,
    anchors: &Anchors,
    positives: &[CityDoc<'_>],
) -> Result<CandidateList, KeylineError> {
    if positives.is_empty() {
        return Err(KeylineError::NoPositives(typology));
    }
    let mut found: Vec<(Candidate, &CityDoc<'_>)> = Vec::new();
    for doc in positives {
        match extract_candidate(doc, anchors, typology)? {
            Some(c) => found.push((c, doc)),
            None => log::warn!("{}: empty page contributes no {typology} candidate", doc.city_id),
        }
    }
    found.sort_by(|a, b| b.0.score.total_cmp(&a.0.score));
    let mut seen = HashSet::new();
    found.retain(|(c, _)| seen.insert(c.text.clone()));
    let dim = anchors.matrix().dim();
    let embeddings = if found.is_empty() {
        EmbeddingMatrix::from_rows(ANCHOR_CITY_ID, anchors.matrix().encoder_id(), dim, vec![])?
    } else {
        EmbeddingMatrix::stack(
            ANCHOR_CITY_ID,
            found.iter().map(|(c, d)| (d.embeddings, c.sentence_index)),
        )?
    };
    Ok(CandidateList {
        typology,
        entries: found.into_iter().map(|(c, _)| c).collect(),
        embeddings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchors() -> Anchors {
        let m = EmbeddingMatrix::from_rows(
            "a",
            "test",
            4,
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        Anchors::from_matrix(Anchors::default_texts(), m).unwrap()
    }

    fn doc(rows: Vec<Vec<f32>>) -> (Vec<String>, EmbeddingMatrix) {
        named("Sentence", rows)
    }

    fn named(word: &str, rows: Vec<Vec<f32>>) -> (Vec<String>, EmbeddingMatrix) {
        let sentences = (0..rows.len()).map(|i| format!("{word} {i}.")).collect();
        (sentences, EmbeddingMatrix::from_rows("c", "test", 4, rows).unwrap())
    }

    #[test]
    fn planted_sentence_two_wins() {
        let (s, e) = doc(vec![
            vec![0.2, 1.0, 0.0, 0.0],
            vec![0.5, 0.0, 1.0, 0.0],
            vec![1.0, 0.1, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let d = CityDoc { city_id: "c", sentences: &s, embeddings: &e };
        let c = extract_candidate(&d, &anchors(), Typology::Congestion).unwrap().unwrap();
        assert_eq!(c.sentence_index, 2);
        assert_eq!(c.text, "Sentence 2.");
        assert!((c.score - 1.0 / 1.01f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn ties_take_lowest_index_and_singletons_win() {
        let (s, e) = doc(vec![vec![0.0, 1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]]);
        let d = CityDoc { city_id: "c", sentences: &s, embeddings: &e };
        assert_eq!(extract_candidate(&d, &anchors(), Typology::Congestion).unwrap().unwrap().sentence_index, 1);
        let (s, e) = doc(vec![vec![0.0, 0.0, 1.0, 0.0]]);
        let d = CityDoc { city_id: "c", sentences: &s, embeddings: &e };
        assert_eq!(extract_candidate(&d, &anchors(), Typology::Congestion).unwrap().unwrap().sentence_index, 0);
    }

    #[test]
    fn collected_sorted_and_deduplicated() {
        let a = anchors();
        let (s1, e1) = doc(vec![vec![0.5, 1.0, 0.0, 0.0]]);
        let (s2, e2) = doc(vec![vec![1.0, 0.2, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]);
        let (s3, e3) = doc(vec![vec![1.0, 0.0, 0.5, 0.0]]);
        let docs = [
            CityDoc { city_id: "one", sentences: &s1, embeddings: &e1 },
            CityDoc { city_id: "two", sentences: &s2, embeddings: &e2 },
            CityDoc { city_id: "three", sentences: &s3, embeddings: &e3 },
        ];
        let list = collect_candidates(Typology::Congestion, &a, &docs).unwrap();
        // "two" and "three" both propose "Sentence 0."; the higher score is kept.
        assert_eq!(list.len(), 1);
        assert_eq!(list.entries[0].source_city, "two");
        assert!(collect_candidates(Typology::Congestion, &a, &[]).is_err());

        let (s4, e4) = named("Other", vec![vec![0.5, 1.0, 0.0, 0.0]]);
        let docs = [docs[1], CityDoc { city_id: "four", sentences: &s4, embeddings: &e4 }];
        let list = collect_candidates(Typology::Congestion, &a, &docs).unwrap();
        assert_eq!(list.len(), 2);
        assert!(list.entries.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(list.embeddings().row(0), e2.row(0));
        let set = list.keyline_set(&a, Stage::All, list.len());
        assert_eq!(set.keylines[0].text, a.text(Typology::Congestion));
        let back = CandidateList::from_set(&set, &a, &docs).unwrap();
        assert_eq!(back, list);
    }
}
