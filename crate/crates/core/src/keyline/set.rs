//! Keyline sets and their text file form.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::anchors::{Anchors, ANCHOR_CITY_ID};
use super::KeylineError;
use crate::embedding::EmbeddingMatrix;
use crate::typology::{Stage, Typology};

/// A city's sentences next to their embeddings.
#[derive(Debug, Clone, Copy)]
pub struct CityDoc<'a> {
    pub city_id: &'a str,
    pub sentences: &'a [String],
    pub embeddings: &'a EmbeddingMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyline {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_similarity: Option<f64>,
}

/// Ordered keylines for one typology; element 0 is always the anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeylineSet {
    pub typology: Typology,
    pub stage: Stage,
    /// Content hashes of the artifacts this set was derived from.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
    pub keylines: Vec<Keyline>,
}

impl KeylineSet {
    pub fn anchor_only(anchors: &Anchors, typology: Typology) -> Self {
        KeylineSet {
            typology,
            stage: Stage::Initial,
            inputs: BTreeMap::new(),
            keylines: vec![Keyline {
                text: anchors.text(typology).to_string(),
                source_city: None,
                sentence_index: None,
                anchor_similarity: None,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.keylines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keylines.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.keylines.iter().map(|k| k.text.as_str()).collect()
    }

    /// Rebuild the embedding matrix: the anchor row from `anchors`, every
    /// other row from the cached embeddings of its source sentence.
    pub fn resolve(&self, anchors: &Anchors, docs: &[CityDoc<'_>]) -> Result<EmbeddingMatrix, KeylineError> {
        let first = self.keylines.first().ok_or(KeylineError::EmptySet)?;
        if first.text != anchors.text(self.typology) {
            return Err(KeylineError::Provenance(format!(
                "{} set starts with {:?}, not the configured anchor",
                self.typology, first.text
            )));
        }
        let by_id: HashMap<&str, &CityDoc<'_>> = docs.iter().map(|d| (d.city_id, d)).collect();
        let mut parts: Vec<(&EmbeddingMatrix, usize)> = vec![(anchors.matrix(), self.typology.index())];
        for k in &self.keylines[1..] {
            let (Some(city), Some(idx)) = (k.source_city.as_deref(), k.sentence_index) else {
                return Err(KeylineError::Provenance(format!("keyline {:?} has no source sentence", k.text)));
            };
            let doc = by_id
                .get(city)
                .ok_or_else(|| KeylineError::Provenance(format!("source city {city} not available")))?;
            if doc.sentences.get(idx) != Some(&k.text) {
                return Err(KeylineError::Provenance(format!(
                    "sentence {idx} of {city} no longer reads {:?}",
                    k.text
                )));
            }
            parts.push((doc.embeddings, idx));
        }
        Ok(EmbeddingMatrix::stack(ANCHOR_CITY_ID, parts)?)
    }

    pub fn to_toml(&self) -> Result<String, KeylineError> {
        toml::to_string(self).map_err(|e| KeylineError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, KeylineError> {
        let set: KeylineSet = toml::from_str(text).map_err(|e| KeylineError::Format(e.to_string()))?;
        if set.keylines.is_empty() {
            return Err(KeylineError::EmptySet);
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), KeylineError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| KeylineError::io(dir, e))?;
        }
        fs::write(path, self.to_toml()?).map_err(|e| KeylineError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, KeylineError> {
        let text = fs::read_to_string(path).map_err(|e| KeylineError::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{FixtureEncoder, SentenceEncoder, embed_sentences};

    #[test]
    fn resolve_uses_source_rows_and_checks_text() {
        let enc = FixtureEncoder::hashed(8);
        let anchors = Anchors::embed(&enc, Anchors::default_texts()).unwrap();
        let sentences = vec!["Traffic is bad.".to_string(), "Jams are daily.".to_string()];
        let emb = embed_sentences(&enc, "x", &sentences).unwrap();
        let docs = [CityDoc { city_id: "x", sentences: &sentences, embeddings: &emb }];
        let mut set = KeylineSet::anchor_only(&anchors, Typology::Congestion);
        set.stage = Stage::Optimal;
        set.keylines.push(Keyline {
            text: "Jams are daily.".into(),
            source_city: Some("x".into()),
            sentence_index: Some(1),
            anchor_similarity: Some(0.5),
        });
        let m = set.resolve(&anchors, &docs).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.row(0), anchors.matrix().row(0));
        assert_eq!(m.row(1), emb.row(1));
        assert_eq!(enc.dim(), m.dim());

        set.keylines[1].sentence_index = Some(0);
        assert!(matches!(set.resolve(&anchors, &docs), Err(KeylineError::Provenance(_))));
    }

    #[test]
    fn file_round_trip() {
        let set = KeylineSet {
            typology: Typology::Bike,
            stage: Stage::All,
            inputs: BTreeMap::from([("split.csv".to_string(), "00ff".to_string())]),
            keylines: vec![
                Keyline { text: "anchor".into(), source_city: None, sentence_index: None, anchor_similarity: None },
                Keyline {
                    text: "Cycling is \"popular\".".into(),
                    source_city: Some("amsterdam".into()),
                    sentence_index: Some(4),
                    anchor_similarity: Some(0.6123456789012345),
                },
            ],
        };
        let text = set.to_toml().unwrap();
        assert!(text.contains("stage = \"all\""));
        assert_eq!(KeylineSet::from_toml(&text).unwrap(), set);
    }
}
