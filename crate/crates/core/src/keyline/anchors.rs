//! Hand-written seed sentences, one per typology.

use serde::{Deserialize, Serialize};

use super::KeylineError;
use crate::embedding::{embed_sentences, EmbeddingCache, EmbeddingMatrix, SentenceEncoder};
use crate::typology::Typology;

/// Pseudo city id under which anchor embeddings are cached.
pub const ANCHOR_CITY_ID: &str = "_anchors";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorText {
    pub typology: Typology,
    pub text: String,
}

impl AnchorText {
    pub fn default_for(typology: Typology) -> Self {
        let text = match typology {
            Typology::Congestion => "the city has heavy traffic congestion",
            Typology::Auto => "most people in the city use cars",
            Typology::Transit => "most people in the city use public transit like bus and metro",
            Typology::Bike => "many people in the city use bike or cycle",
        };
        AnchorText {
            typology,
            text: text.to_string(),
        }
    }
}

/// The four anchor texts with their embeddings, rows in [`Typology::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchors {
    texts: Vec<String>,
    embeddings: EmbeddingMatrix,
}

impl Anchors {
    pub fn default_texts() -> Vec<String> {
        Typology::ALL
            .iter()
            .map(|&t| AnchorText::default_for(t).text)
            .collect()
    }

    pub fn embed(encoder: &dyn SentenceEncoder, texts: Vec<String>) -> Result<Self, KeylineError> {
        let embeddings = embed_sentences(encoder, ANCHOR_CITY_ID, &texts)?;
        Self::from_matrix(texts, embeddings)
    }

    pub fn embed_cached(
        encoder: &dyn SentenceEncoder,
        cache: &EmbeddingCache,
        texts: Vec<String>,
    ) -> Result<Self, KeylineError> {
        let (embeddings, _) = cache.embed(encoder, ANCHOR_CITY_ID, &texts)?;
        Self::from_matrix(texts, embeddings)
    }

    pub fn from_matrix(texts: Vec<String>, embeddings: EmbeddingMatrix) -> Result<Self, KeylineError> {
        if texts.len() != 4 || embeddings.rows() != 4 {
            return Err(KeylineError::Format(format!(
                "expected 4 anchors, got {} texts and {} vectors",
                texts.len(),
                embeddings.rows()
            )));
        }
        Ok(Anchors { texts, embeddings })
    }

    pub fn text(&self, t: Typology) -> &str {
        &self.texts[t.index()]
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    /// Single-row matrix holding the anchor of `t`.
    pub fn singleton(&self, t: Typology) -> EmbeddingMatrix {
        EmbeddingMatrix::stack(ANCHOR_CITY_ID, [(&self.embeddings, t.index())])
            .expect("rows of one matrix share a dimension")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FixtureEncoder;

    #[test]
    fn default_texts_are_fixed() {
        assert_eq!(
            AnchorText::default_for(Typology::Congestion).text,
            "the city has heavy traffic congestion"
        );
        assert_eq!(
            Anchors::default_texts(),
            vec![
                "the city has heavy traffic congestion",
                "most people in the city use cars",
                "most people in the city use public transit like bus and metro",
                "many people in the city use bike or cycle",
            ]
        );
    }

    #[test]
    fn singleton_rows_follow_typology_order() {
        let a = Anchors::embed(&FixtureEncoder::hashed(16), Anchors::default_texts()).unwrap();
        for t in Typology::ALL {
            assert_eq!(a.singleton(t).row(0), a.matrix().row(t.index()));
        }
    }
}
