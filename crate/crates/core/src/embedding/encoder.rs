//! Sentence encoders: a deterministic fixture encoder for tests and offline
//! runs, and a remote encoder speaking a small JSON request/response protocol.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbedError, EmbeddingMatrix};

/// Maps sentences to fixed-dimension vectors whose cosine similarity tracks
/// semantic similarity.
pub trait SentenceEncoder: Send + Sync {
    /// Identifies the model and version; part of every cache key.
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    /// One raw (not necessarily normalized) vector per input sentence.
    fn encode(&self, sentences: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

/// Encode and L2-normalize a document's sentences.
pub fn embed_sentences(
    encoder: &dyn SentenceEncoder,
    city_id: &str,
    sentences: &[String],
) -> Result<EmbeddingMatrix, EmbedError> {
    let rows = encoder.encode(sentences)?;
    if rows.len() != sentences.len() {
        return Err(EmbedError::Protocol(format!(
            "encoder returned {} vectors for {} sentences",
            rows.len(),
            sentences.len()
        )));
    }
    EmbeddingMatrix::from_rows(city_id, encoder.id(), encoder.dim(), rows)
}

/// Lookup table behind [`FixtureEncoder`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureTable {
    pub dim: usize,
    /// Exact sentence text to vector; takes precedence over token sums.
    #[serde(default)]
    pub sentences: BTreeMap<String, Vec<f32>>,
    /// Lower-cased token to vector.
    #[serde(default)]
    pub tokens: BTreeMap<String, Vec<f32>>,
}

impl FixtureTable {
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let text = std::fs::read_to_string(path).map_err(|e| EmbedError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| EmbedError::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let text =
            serde_json::to_string(self).map_err(|e| EmbedError::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| EmbedError::io(path, e))
    }
}

/// Deterministic encoder: exact-sentence overrides, otherwise the sum of
/// per-token vectors. Tokens missing from the table get a pseudo-random
/// vector seeded by the token's hash.
#[derive(Debug, Clone)]
pub struct FixtureEncoder {
    id: String,
    table: FixtureTable,
}

impl FixtureEncoder {
    pub fn new(table: FixtureTable) -> Self {
        let bytes = serde_json::to_vec(&table).expect("fixture table serializes");
        let digest = hex::encode(Sha256::digest(&bytes));
        FixtureEncoder {
            id: format!("fixture-v1-{}", &digest[..12]),
            table,
        }
    }

    /// Token-hash encoder with no table entries.
    pub fn hashed(dim: usize) -> Self {
        Self::new(FixtureTable {
            dim,
            ..Default::default()
        })
    }

    pub fn table(&self) -> &FixtureTable {
        &self.table
    }

    fn token_vector(&self, token: &str) -> Vec<f32> {
        if let Some(v) = self.table.tokens.get(token) {
            return v.clone();
        }
        let digest = Sha256::digest(token.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.table.dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    }

    fn encode_one(&self, sentence: &str) -> Result<Vec<f32>, EmbedError> {
        if let Some(v) = self.table.sentences.get(sentence) {
            if v.len() != self.table.dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.table.dim,
                    got: v.len(),
                });
            }
            return Ok(v.clone());
        }
        let mut acc = vec![0.0f32; self.table.dim];
        let lower = sentence.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let v = self.token_vector(token);
            if v.len() != acc.len() {
                return Err(EmbedError::DimensionMismatch {
                    expected: acc.len(),
                    got: v.len(),
                });
            }
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        Ok(acc)
    }
}

impl SentenceEncoder for FixtureEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.table.dim
    }

    fn encode(&self, sentences: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        sentences.iter().map(|s| self.encode_one(s)).collect()
    }
}

/// Carries one serialized request to an encoder service and returns its reply.
pub trait Transport: Send + Sync {
    fn roundtrip(&self, request: &[u8]) -> Result<Vec<u8>, EmbedError>;
}

/// HTTP POST of the JSON request body.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport {
            url: url.into(),
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn roundtrip(&self, request: &[u8]) -> Result<Vec<u8>, EmbedError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(request)
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        resp.body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_vec()
            .map_err(|e| EmbedError::Unavailable(e.to_string()))
    }
}

/// Runs a program per request: JSON on stdin, JSON on stdout.
pub struct CommandTransport {
    program: String,
    args: Vec<String>,
}

impl CommandTransport {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandTransport {
            program: program.into(),
            args,
        }
    }
}

impl Transport for CommandTransport {
    fn roundtrip(&self, request: &[u8]) -> Result<Vec<u8>, EmbedError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EmbedError::Unavailable(format!("{}: {e}", self.program)))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            stdin
                .write_all(request)
                .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        }
        let mut out = Vec::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_end(&mut out)
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        let status = child
            .wait()
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        if !status.success() {
            return Err(EmbedError::Unavailable(format!(
                "{} exited with {status}",
                self.program
            )));
        }
        Ok(out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub sentences: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub embeddings: Vec<Vec<f32>>,
}

/// Encoder reached through a [`Transport`], batching requests.
pub struct RemoteEncoder {
    id: String,
    dim: usize,
    batch_size: usize,
    transport: Box<dyn Transport>,
}

impl RemoteEncoder {
    pub fn new(id: impl Into<String>, dim: usize, transport: Box<dyn Transport>) -> Self {
        RemoteEncoder {
            id: id.into(),
            dim,
            batch_size: 256,
            transport,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }
}

impl SentenceEncoder for RemoteEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentences: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut out = Vec::with_capacity(sentences.len());
        for batch in sentences.chunks(self.batch_size) {
            let req = serde_json::to_vec(&EncodeRequest {
                sentences: batch.to_vec(),
            })
            .map_err(|e| EmbedError::Protocol(e.to_string()))?;
            let reply = self.transport.roundtrip(&req)?;
            let resp: EncodeResponse = serde_json::from_slice(&reply)
                .map_err(|e| EmbedError::Protocol(format!("bad encoder response: {e}")))?;
            if resp.embeddings.len() != batch.len() {
                return Err(EmbedError::Protocol(format!(
                    "expected {} vectors, got {}",
                    batch.len(),
                    resp.embeddings.len()
                )));
            }
            for v in resp.embeddings {
                if v.len() != self.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.dim,
                        got: v.len(),
                    });
                }
                out.push(v);
            }
        }
        Ok(out)
    }
}
