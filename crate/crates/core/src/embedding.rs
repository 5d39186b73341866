//! Sentence embeddings and document pooling.
//!
//! A backend turns sentences into rows of a matrix. A document vector is the
//! arithmetic mean of its sentence rows. Matrices are persisted as a
//! little-endian `f32` blob with a JSON sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::CleanDocument;
use crate::error::{EmbedError, Error, Result};

pub const REFERENCE_DIMENSION: usize = 768;
pub const REFERENCE_MODEL: &str = "bert-base-nli-mean-tokens";
pub const HASHING_BACKEND: &str = "hashing";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub backend_id: String,
    pub model_name: String,
    pub dimension: usize,
    pub batch_size: usize,
    /// Longest sentence, in whitespace tokens, passed to the backend.
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_tokens() -> usize {
    256
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            backend_id: HASHING_BACKEND.into(),
            model_name: "hashing-ngram-v1".into(),
            dimension: REFERENCE_DIMENSION,
            batch_size: 64,
            max_tokens: default_max_tokens(),
            seed: 0,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// A source of sentence vectors.
///
/// Implementations must return one row per input sentence in input order,
/// and must be bitwise deterministic for a fixed model version.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed_batch(&self, sentences: &[String]) -> std::result::Result<Vec<Vec<f32>>, EmbedError>;
}

/// Row-major matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Input(format!(
                    "row {i} has width {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| p / self.cols.max(1))
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: EmbedderConfig,
    pub content_hash: String,
    #[serde(default)]
    pub truncated_sentences: usize,
}

/// One row per document, ids in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub ids: Vec<String>,
    pub vectors: Matrix,
    pub model_name: String,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, vectors: Matrix, model_name: impl Into<String>) -> Result<Self> {
        if ids.len() != vectors.rows {
            return Err(Error::Input(format!(
                "{} ids for {} rows",
                ids.len(),
                vectors.rows
            )));
        }
        if let Some(row) = vectors.first_non_finite() {
            return Err(Error::Input(format!("row {row} contains NaN or Inf")));
        }
        Ok(EmbeddingMatrix {
            ids,
            vectors,
            model_name: model_name.into(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.vectors.cols
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// SHA-256 over ids, shape and the raw little-endian values.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        h.update((self.vectors.rows as u64).to_le_bytes());
        h.update((self.vectors.cols as u64).to_le_bytes());
        h.update(self.vectors.to_le_bytes());
        hex::encode(h.finalize())
    }

    /// Writes `<path>` (binary) and `<path>.json` (sidecar).
    pub fn save(&self, path: &Path) -> Result<()> {
        let sidecar = MatrixSidecar {
            ids: self.ids.clone(),
            dimension: self.vectors.cols,
            rows: self.vectors.rows,
            model_name: self.model_name.clone(),
            content_hash: self.content_hash(),
        };
        fs::write(path, self.vectors.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let mut f = fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::to_writer_pretty(&mut f, &sidecar)?;
        f.write_all(b"\n").map_err(|e| Error::io(&side, e))?;
        Ok(())
    }

    /// Loads a matrix and verifies it against the sidecar hash.
    pub fn load(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: MatrixSidecar =
            serde_json::from_str(&text).map_err(|e| Error::artifact(&side, e.to_string()))?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let expected = sidecar.rows * sidecar.dimension * 4;
        if bytes.len() != expected || sidecar.ids.len() != sidecar.rows {
            return Err(Error::artifact(
                path,
                format!("{} bytes, sidecar implies {expected}", bytes.len()),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let m = EmbeddingMatrix::new(
            sidecar.ids,
            Matrix {
                rows: sidecar.rows,
                cols: sidecar.dimension,
                data,
            },
            sidecar.model_name,
        )
        .map_err(|e| Error::artifact(path, e.to_string()))?;
        if m.content_hash() != sidecar.content_hash {
            return Err(Error::artifact(path, "content hash mismatch"));
        }
        Ok(m)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixSidecar {
    ids: Vec<String>,
    dimension: usize,
    rows: usize,
    model_name: String,
    content_hash: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn truncate_tokens(sentence: &str, max_tokens: usize) -> Option<String> {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    (tokens.len() > max_tokens).then(|| tokens[..max_tokens].join(" "))
}

/// Embedding output with the number of sentences cut at the token limit.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbeddings {
    pub rows: Matrix,
    pub truncated: usize,
}

/// Embeds sentences in batches, preserving input order.
pub fn embed_sentences(
    backend: &dyn Embedder,
    sentences: &[String],
    config: &EmbedderConfig,
) -> std::result::Result<SentenceEmbeddings, EmbedError> {
    if backend.dimension() != config.dimension {
        return Err(EmbedError::DimensionMismatch {
            expected: config.dimension,
            actual: backend.dimension(),
        });
    }
    if let Some(i) = sentences.iter().position(|s| s.trim().is_empty()) {
        return Err(EmbedError::Input(format!("sentence {i} is empty")));
    }
    let mut truncated = 0;
    let prepared: Vec<String> = sentences
        .iter()
        .map(|s| match truncate_tokens(s, config.max_tokens) {
            Some(t) => {
                truncated += 1;
                t
            }
            None => s.clone(),
        })
        .collect();

    let mut data = Vec::with_capacity(sentences.len() * config.dimension);
    for batch in prepared.chunks(config.batch_size.max(1)) {
        let rows = backend.embed_batch(batch)?;
        if rows.len() != batch.len() {
            return Err(EmbedError::RowCount {
                expected: batch.len(),
                actual: rows.len(),
            });
        }
        for row in rows {
            if row.len() != config.dimension {
                return Err(EmbedError::DimensionMismatch {
                    expected: config.dimension,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::NonFinite {
                    row: data.len() / config.dimension,
                });
            }
            data.extend_from_slice(&row);
        }
    }
    Ok(SentenceEmbeddings {
        rows: Matrix {
            rows: sentences.len(),
            cols: config.dimension,
            data,
        },
        truncated,
    })
}

/// Mean of sentence rows. Accumulates in `f64`.
pub fn pool_document(rows: &Matrix) -> Result<Vec<f32>> {
    if rows.rows == 0 {
        return Err(Error::Input("cannot pool a document without sentences".into()));
    }
    let mut acc = vec![0f64; rows.cols];
    for r in rows.iter_rows() {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += f64::from(*v);
        }
    }
    let n = rows.rows as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Embeds every non-excluded document and mean-pools its sentences.
pub fn embed_documents(
    backend: &dyn Embedder,
    docs: &[CleanDocument],
    config: &EmbedderConfig,
) -> Result<(EmbeddingMatrix, Provenance)> {
    config.validate()?;
    let kept: Vec<&CleanDocument> = docs.iter().filter(|d| !d.excluded).collect();
    let mut flat = Vec::new();
    let mut spans = Vec::with_capacity(kept.len());
    for d in &kept {
        let start = flat.len();
        flat.extend(d.sentences.iter().cloned());
        spans.push(start..flat.len());
    }
    let embedded = embed_sentences(backend, &flat, config)?;
    let mut out = Matrix::zeros(kept.len(), config.dimension);
    for (i, span) in spans.into_iter().enumerate() {
        let sub = Matrix {
            rows: span.len(),
            cols: config.dimension,
            data: embedded.rows.data[span.start * config.dimension..span.end * config.dimension]
                .to_vec(),
        };
        out.row_mut(i).copy_from_slice(&pool_document(&sub)?);
    }
    let ids = kept.iter().map(|d| d.id.clone()).collect();
    let matrix = EmbeddingMatrix::new(ids, out, config.model_name.clone())?;
    let provenance = Provenance {
        config: config.clone(),
        content_hash: matrix.content_hash(),
        truncated_sentences: embedded.truncated,
    };
    Ok((matrix, provenance))
}

/// Seeded FNV-1a with a final avalanche step.
fn feature_hash(feature: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in feature.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Deterministic embedding by signed feature hashing of lowercased unigrams
/// and bigrams, L2-normalised. Sentences without word characters hash their
/// raw text as a single feature.
pub fn fallback_embed(sentence: &str, dimension: usize, seed: u64) -> Vec<f32> {
    assert!(dimension >= 2, "hashing embedder needs at least two buckets");
    let tokens = tokenize(sentence);
    let mut features: Vec<String> = tokens.iter().map(|t| format!("u:{t}")).collect();
    features.extend(tokens.windows(2).map(|w| format!("b:{} {}", w[0], w[1])));
    if features.is_empty() {
        features.push(format!("r:{sentence}"));
    }
    let mut v = vec![0f64; dimension];
    for f in &features {
        let h = feature_hash(f, seed);
        let bucket = (h % dimension as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // Every feature cancelled out; fall back to the first feature's bucket.
        let bucket = (feature_hash(&features[0], seed) % dimension as u64) as usize;
        v[bucket] = 1.0;
        return v.into_iter().map(|x| x as f32).collect();
    }
    v.into_iter().map(|x| (x / norm) as f32).collect()
}

/// Backend wrapping [`fallback_embed`], for tests and offline runs.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl HashingEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        HashingEmbedder { dimension, seed }
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, sentences: &[String]) -> std::result::Result<Vec<Vec<f32>>, EmbedError> {
        if self.dimension < 2 {
            return Err(EmbedError::Input("hashing embedder needs dimension >= 2".into()));
        }
        Ok(sentences
            .iter()
            .map(|s| fallback_embed(s, self.dimension, self.seed))
            .collect())
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}
