//! Binary embedding cache.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "KLEMBED\0"
//! version    u32      1
//! id_len     u32
//! encoder_id id_len bytes, UTF-8
//! dim        u32
//! rows       u32
//! hash       32 bytes  SHA-256 of the sentence list
//! data       rows * dim f32, row-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{embed_sentences, EmbedError, EmbeddingMatrix, SentenceEncoder};
use crate::corpus::file_key;

pub const MAGIC: &[u8; 8] = b"KLEMBED\0";
pub const VERSION: u32 = 1;

/// SHA-256 over the length-prefixed sentence texts.
pub fn content_hash(sentences: &[String]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((sentences.len() as u64).to_le_bytes());
    for s in sentences {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    }
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheHeader {
    pub version: u32,
    pub encoder_id: String,
    pub dim: usize,
    pub rows: usize,
    pub hash: [u8; 32],
}

pub fn encode_file(m: &EmbeddingMatrix, hash: &[u8; 32]) -> Vec<u8> {
    let id = m.encoder_id().as_bytes();
    let mut buf = Vec::with_capacity(60 + id.len() + m.as_slice().len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
    buf.extend_from_slice(id);
    buf.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(hash);
    for x in m.as_slice() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbedError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| EmbedError::Format("truncated embedding file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, EmbedError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_header(buf: &[u8]) -> Result<(CacheHeader, usize), EmbedError> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(EmbedError::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(EmbedError::Format(format!("unsupported version {version}")));
    }
    let id_len = c.u32()? as usize;
    let encoder_id = String::from_utf8(c.take(id_len)?.to_vec())
        .map_err(|_| EmbedError::Format("encoder id is not UTF-8".into()))?;
    let dim = c.u32()? as usize;
    let rows = c.u32()? as usize;
    let hash: [u8; 32] = c.take(32)?.try_into().unwrap();
    Ok((
        CacheHeader {
            version,
            encoder_id,
            dim,
            rows,
            hash,
        },
        c.pos,
    ))
}

pub fn decode_file(buf: &[u8], city_id: &str) -> Result<(CacheHeader, EmbeddingMatrix), EmbedError> {
    let (header, offset) = decode_header(buf)?;
    let n = header
        .rows
        .checked_mul(header.dim)
        .ok_or_else(|| EmbedError::Format("size overflow".into()))?;
    let body = &buf[offset..];
    if body.len() != n * 4 {
        return Err(EmbedError::Format(format!(
            "expected {} data bytes, found {}",
            n * 4,
            body.len()
        )));
    }
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = EmbeddingMatrix::from_normalized(city_id, header.encoder_id.clone(), header.dim, data);
    Ok((header, m))
}

/// Per-(city, encoder) files validated against the sentence content hash.
pub struct EmbeddingCache {
    dir: PathBuf,
    locks: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

impl EmbeddingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        EmbeddingCache {
            dir: dir.into(),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn path_for(&self, city_id: &str, encoder_id: &str) -> PathBuf {
        self.dir
            .join(format!("{}.{}.emb", file_key(city_id), file_key(encoder_id)))
    }

    fn lock_for(&self, path: &Path) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry(path.to_path_buf())
            .or_default()
            .clone()
    }

    /// Cached matrix if present and built from exactly these sentences.
    /// A dimension different from `expected_dim` is a fatal error.
    pub fn load(
        &self,
        city_id: &str,
        encoder_id: &str,
        expected_dim: usize,
        sentences: &[String],
    ) -> Result<Option<EmbeddingMatrix>, EmbedError> {
        let path = self.path_for(city_id, encoder_id);
        let buf = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(EmbedError::io(&path, e)),
        };
        let (header, m) = decode_file(&buf, city_id)?;
        if header.dim != expected_dim {
            return Err(EmbedError::DimensionMismatch {
                expected: expected_dim,
                got: header.dim,
            });
        }
        if header.encoder_id != encoder_id
            || header.hash != content_hash(sentences)
            || header.rows != sentences.len()
        {
            return Ok(None);
        }
        Ok(Some(m))
    }

    pub fn store(&self, m: &EmbeddingMatrix, sentences: &[String]) -> Result<PathBuf, EmbedError> {
        fs::create_dir_all(&self.dir).map_err(|e| EmbedError::io(&self.dir, e))?;
        let path = self.path_for(m.city_id(), m.encoder_id());
        let lock = self.lock_for(&path);
        let _guard = lock.lock().unwrap();
        let tmp = path.with_extension("emb.tmp");
        fs::write(&tmp, encode_file(m, &content_hash(sentences)))
            .map_err(|e| EmbedError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| EmbedError::io(&path, e))?;
        Ok(path)
    }

    /// Cache hit or encode-and-store. The flag reports a hit.
    pub fn embed(
        &self,
        encoder: &dyn SentenceEncoder,
        city_id: &str,
        sentences: &[String],
    ) -> Result<(EmbeddingMatrix, bool), EmbedError> {
        if let Some(m) = self.load(city_id, encoder.id(), encoder.dim(), sentences)? {
            return Ok((m, true));
        }
        let m = embed_sentences(encoder, city_id, sentences)?;
        self.store(&m, sentences)?;
        Ok((m, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FixtureEncoder;

    fn sentences() -> Vec<String> {
        vec!["One line here.".into(), "Another line there.".into()]
    }

    #[test]
    fn store_then_load_is_bitwise_equal() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let enc = FixtureEncoder::hashed(12);
        let (m, hit) = cache.embed(&enc, "c1", &sentences()).unwrap();
        assert!(!hit);
        let (back, hit) = cache.embed(&enc, "c1", &sentences()).unwrap();
        assert!(hit);
        let a: Vec<u32> = m.as_slice().iter().map(|x| x.to_bits()).collect();
        let b: Vec<u32> = back.as_slice().iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.encoder_id(), enc.id());
    }

    #[test]
    fn header_fields() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let enc = FixtureEncoder::hashed(5);
        cache.embed(&enc, "c1", &sentences()).unwrap();
        let buf = fs::read(cache.path_for("c1", enc.id())).unwrap();
        let (h, offset) = decode_header(&buf).unwrap();
        assert_eq!(h.dim, 5);
        assert_eq!(h.rows, 2);
        assert_eq!(h.encoder_id, enc.id());
        assert_eq!(h.hash, content_hash(&sentences()));
        assert_eq!(buf.len(), offset + 2 * 5 * 4);
    }

    #[test]
    fn changed_sentences_are_stale() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let enc = FixtureEncoder::hashed(4);
        cache.embed(&enc, "c1", &sentences()).unwrap();
        let mut changed = sentences();
        changed[1].push('!');
        assert!(cache.load("c1", enc.id(), 4, &changed).unwrap().is_none());
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let enc = FixtureEncoder::hashed(4);
        cache.embed(&enc, "c1", &sentences()).unwrap();
        assert!(matches!(
            cache.load("c1", enc.id(), 8, &sentences()),
            Err(EmbedError::DimensionMismatch { expected: 8, got: 4 })
        ));
    }

    #[test]
    fn corrupt_files_rejected() {
        assert!(decode_header(b"NOTMAGIC\x01\0\0\0").is_err());
        let m = EmbeddingMatrix::from_rows("c", "e", 2, vec![vec![1.0, 0.0]]).unwrap();
        let mut buf = encode_file(&m, &[0; 32]);
        buf.pop();
        assert!(decode_file(&buf, "c").is_err());
    }
}
