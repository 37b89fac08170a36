//! Sentence encoders, the embedding cache and cosine similarity.

mod cache;
mod encoder;
mod matrix;

use std::path::{Path, PathBuf};

pub use cache::{content_hash, decode_file, decode_header, encode_file, CacheHeader, EmbeddingCache};
pub use encoder::{
    embed_sentences, CommandTransport, EncodeRequest, EncodeResponse, FixtureEncoder,
    FixtureTable, HttpTransport, RemoteEncoder, SentenceEncoder, Transport,
};
pub use matrix::{
    cosine_similarity, dot, norm, similarity_matrix, EmbeddingMatrix, SimilarityMatrix,
};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    /// Encoder could not be reached; retrying may help.
    #[error("encoder unavailable: {0}")]
    Unavailable(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("non-finite embedding value")]
    NonFinite,
    #[error("encoder protocol error: {0}")]
    Protocol(String),
    #[error("embedding file format error: {0}")]
    Format(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EmbedError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbedError::Unavailable(_))
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EmbedError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
