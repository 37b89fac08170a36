use super::EmbedError;

/// Row-major sentence embeddings for one document, every row unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    city_id: String,
    encoder_id: String,
    dim: usize,
    data: Vec<f32>,
    sq_norms: Vec<f64>,
}

impl EmbeddingMatrix {
    /// L2-normalizes every row. Zero or non-finite rows are rejected.
    pub fn from_rows(
        city_id: impl Into<String>,
        encoder_id: impl Into<String>,
        dim: usize,
        rows: Vec<Vec<f32>>,
    ) -> Result<Self, EmbedError> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            let norm = norm(row);
            if !norm.is_finite() {
                return Err(EmbedError::NonFinite);
            }
            if norm == 0.0 {
                return Err(EmbedError::ZeroVector);
            }
            data.extend(row.iter().map(|&x| (x as f64 / norm) as f32));
        }
        Ok(Self::from_normalized(city_id, encoder_id, dim, data))
    }

    /// Wraps already-normalized row-major data, e.g. read back from cache.
    pub(crate) fn from_normalized(
        city_id: impl Into<String>,
        encoder_id: impl Into<String>,
        dim: usize,
        data: Vec<f32>,
    ) -> Self {
        let sq_norms = if dim == 0 {
            Vec::new()
        } else {
            data.chunks_exact(dim).map(|r| dot(r, r)).collect()
        };
        EmbeddingMatrix {
            city_id: city_id.into(),
            encoder_id: encoder_id.into(),
            dim,
            data,
            sq_norms,
        }
    }

    pub fn city_id(&self) -> &str {
        &self.city_id
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.sq_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Cosine similarity between row `i` of `self` and row `k` of `other`.
    #[inline]
    pub fn row_similarity(&self, i: usize, other: &EmbeddingMatrix, k: usize) -> f64 {
        let s = dot(self.row(i), other.row(k)) / (self.sq_norms[i] * other.sq_norms[k]).sqrt();
        s.clamp(-1.0, 1.0)
    }

    /// Stack rows of several matrices with equal dimension.
    pub fn stack<'a, I>(city_id: &str, parts: I) -> Result<Self, EmbedError>
    where
        I: IntoIterator<Item = (&'a EmbeddingMatrix, usize)>,
    {
        let mut dim = None;
        let mut encoder = String::new();
        let mut data = Vec::new();
        for (m, i) in parts {
            match dim {
                None => {
                    dim = Some(m.dim);
                    encoder = m.encoder_id.clone();
                }
                Some(d) if d != m.dim => {
                    return Err(EmbedError::DimensionMismatch {
                        expected: d,
                        got: m.dim,
                    })
                }
                _ => {}
            }
            data.extend_from_slice(m.row(i));
        }
        Ok(Self::from_normalized(city_id, encoder, dim.unwrap_or(0), data))
    }
}

pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum()
}

pub fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// `u.v / sqrt(|u|^2 |v|^2)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (su, sv) = (dot(u, u), dot(v, v));
    if su == 0.0 || sv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot(u, v) / (su * sv).sqrt()).clamp(-1.0, 1.0))
}

/// Dense `M x K` similarity table between document rows and keyline rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }

    pub fn max(&self) -> Option<f64> {
        self.data.iter().copied().reduce(f64::max)
    }

    /// Per-column maxima over document rows.
    pub fn column_max(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|k| {
                (0..self.rows)
                    .map(|i| self.get(i, k))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }
}

pub fn similarity_matrix(
    doc: &EmbeddingMatrix,
    keys: &EmbeddingMatrix,
) -> Result<SimilarityMatrix, EmbedError> {
    if doc.dim() != keys.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: doc.dim(),
            got: keys.dim(),
        });
    }
    let (m, k) = (doc.rows(), keys.rows());
    let mut data = Vec::with_capacity(m * k);
    for i in 0..m {
        for j in 0..k {
            data.push(doc.row_similarity(i, keys, j));
        }
    }
    Ok(SimilarityMatrix {
        rows: m,
        cols: k,
        data,
    })
}
