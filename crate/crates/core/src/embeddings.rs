//! Sentence-embedding providers and unsupervised cosine scoring.
//!
//! A provider turns texts into fixed-width vectors. Two are built in:
//! [`FileProvider`] reads a JSON-lines cache keyed by the SHA-256 of each
//! text, and [`HttpProvider`] speaks the `/v1/embed` protocol:
//!
//! ```text
//! POST /v1/embed   {"model": "...", "texts": ["...", ...]}
//! 200              {"model": "...", "dimension": 768, "vectors": [[...], ...]}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DatasetSplit;
use crate::features::cosine_slices;
use crate::http::{endpoint, run_bounded, HttpFailure, JsonClient, RetryPolicy};
use crate::text_key;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("no cached embedding for text #{index}")]
    MissingEmbedding { index: usize },
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("vector #{index} has dimension {found}, provider declares {expected}")]
    DimensionViolation {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("cannot compare vectors of dimension {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("embedding cache line {line}: {reason}")]
    CacheFormat { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for EmbeddingError {
    fn from(e: std::io::Error) -> Self {
        EmbeddingError::Io(e.to_string())
    }
}

/// Finite, non-empty embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::InvalidVector("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector("non-finite entry".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = EmbeddingError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for DenseVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `u.v / (|u| |v|)`, or 0 when either norm is zero.
pub fn cosine(u: &DenseVector, v: &DenseVector) -> Result<f64, EmbeddingError> {
    if u.dimension() != v.dimension() {
        return Err(EmbeddingError::DimensionMismatch(u.dimension(), v.dimension()));
    }
    Ok(cosine_slices(u.values(), v.values()))
}

/// Source of sentence embeddings with a fixed, declared dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn model_name(&self) -> &str;

    fn dimension(&self) -> usize;

    /// One vector per text, in request order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<DenseVector>, EmbeddingError>;
}

/// One line of an embedding cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    /// Lowercase hex SHA-256 of the UTF-8 text.
    pub key: String,
    pub model: String,
    pub vector: DenseVector,
}

/// In-memory view of a JSON-lines embedding cache, grouped by model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    models: BTreeMap<String, BTreeMap<String, DenseVector>>,
}

fn valid_key(key: &str) -> bool {
    key.len() == 64 && key.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses JSON lines; keys must be unique per model and vector lengths
    /// uniform per model. Blank lines are ignored.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut cache = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CacheRecord =
                serde_json::from_str(&line).map_err(|e| EmbeddingError::CacheFormat {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            cache
                .insert(record)
                .map_err(|reason| EmbeddingError::CacheFormat { line: i + 1, reason })?;
        }
        Ok(cache)
    }

    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        let file = std::fs::File::open(path)
            .map_err(|e| EmbeddingError::Io(format!("{}: {e}", path.display())))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }

    /// Adds a record. A repeated key is accepted only if the vector is equal.
    pub fn insert(&mut self, record: CacheRecord) -> Result<(), String> {
        if !valid_key(&record.key) {
            return Err(format!("key {:?} is not a lowercase hex SHA-256", record.key));
        }
        let entries = self.models.entry(record.model.clone()).or_default();
        if let Some(first) = entries.values().next() {
            if first.dimension() != record.vector.dimension() {
                return Err(format!(
                    "vector length {} differs from {} used by model {:?}",
                    record.vector.dimension(),
                    first.dimension(),
                    record.model
                ));
            }
        }
        match entries.get(&record.key) {
            Some(existing) if *existing != record.vector => Err(format!(
                "conflicting vectors for key {} in model {:?}",
                record.key, record.model
            )),
            Some(_) => Ok(()),
            None => {
                entries.insert(record.key, record.vector);
                Ok(())
            }
        }
    }

    pub fn insert_text(&mut self, model: &str, text: &str, vector: DenseVector) -> Result<(), String> {
        self.insert(CacheRecord {
            key: text_key(text),
            model: model.to_string(),
            vector,
        })
    }

    pub fn get(&self, model: &str, key: &str) -> Option<&DenseVector> {
        self.models.get(model)?.get(key)
    }

    pub fn len(&self) -> usize {
        self.models.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn dimension_of(&self, model: &str) -> Option<usize> {
        self.models.get(model)?.values().next().map(DenseVector::dimension)
    }

    /// Merges `other` into `self`; fails on conflicting entries.
    pub fn merge(&mut self, other: EmbeddingCache) -> Result<(), String> {
        for (model, entries) in other.models {
            for (key, vector) in entries {
                self.insert(CacheRecord {
                    key,
                    model: model.clone(),
                    vector,
                })?;
            }
        }
        Ok(())
    }

    /// Writes records sorted by model, then key.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), EmbeddingError> {
        for (model, entries) in &self.models {
            for (key, vector) in entries {
                let record = CacheRecord {
                    key: key.clone(),
                    model: model.clone(),
                    vector: vector.clone(),
                };
                serde_json::to_writer(&mut out, &record)
                    .map_err(|e| EmbeddingError::Io(e.to_string()))?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Looks embeddings up in a cache file by text hash.
#[derive(Debug, Clone)]
pub struct FileProvider {
    model: String,
    dimension: usize,
    entries: BTreeMap<String, DenseVector>,
}

impl FileProvider {
    /// Uses the cache records of `model`. With `dimension = None` the
    /// dimension is taken from the cache.
    pub fn from_cache(
        cache: &EmbeddingCache,
        model: &str,
        dimension: Option<usize>,
    ) -> Result<Self, EmbeddingError> {
        let entries = cache.models.get(model).cloned().unwrap_or_default();
        let found = entries.values().next().map(DenseVector::dimension);
        let dimension = match (dimension, found) {
            (Some(d), Some(f)) if d != f => {
                return Err(EmbeddingError::DimensionViolation {
                    index: 0,
                    expected: d,
                    found: f,
                })
            }
            (Some(d), _) => d,
            (None, Some(f)) => f,
            (None, None) => {
                return Err(EmbeddingError::ProtocolError(format!(
                    "cache has no vectors for model {model:?}"
                )))
            }
        };
        if dimension == 0 {
            return Err(EmbeddingError::InvalidVector("dimension must be positive".into()));
        }
        Ok(Self {
            model: model.to_string(),
            dimension,
            entries,
        })
    }

    pub fn open(path: &Path, model: &str, dimension: Option<usize>) -> Result<Self, EmbeddingError> {
        Self::from_cache(&EmbeddingCache::open(path)?, model, dimension)
    }

    /// Builds a provider from `(text, vector)` pairs.
    pub fn from_texts<'a, I>(model: &str, items: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (&'a str, Vec<f64>)>,
    {
        let mut cache = EmbeddingCache::new();
        for (text, v) in items {
            cache
                .insert_text(model, text, DenseVector::new(v)?)
                .map_err(|reason| EmbeddingError::CacheFormat { line: 0, reason })?;
        }
        Self::from_cache(&cache, model, None)
    }
}

impl EmbeddingProvider for FileProvider {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<DenseVector>, EmbeddingError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.entries
                    .get(&text_key(t))
                    .cloned()
                    .ok_or(EmbeddingError::MissingEmbedding { index })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    #[allow(dead_code)]
    model: String,
    dimension: usize,
    vectors: Vec<Vec<f64>>,
}

/// Client for a `/v1/embed` service. Results are memoized per text for the
/// lifetime of the provider; misses are sent in chunks with a bounded number
/// of concurrent requests.
pub struct HttpProvider {
    base_url: String,
    model: String,
    dimension: usize,
    batch_size: usize,
    max_in_flight: usize,
    client: JsonClient,
    memo: Mutex<HashMap<String, DenseVector>>,
}

impl HttpProvider {
    pub fn new(base_url: &str, model: &str, dimension: usize) -> Self {
        Self {
            base_url: base_url.to_string(),
            model: model.to_string(),
            dimension,
            batch_size: 64,
            max_in_flight: 4,
            client: JsonClient::new(RetryPolicy::default()),
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_retries(mut self, attempts: u32, initial_backoff: std::time::Duration) -> Self {
        self.client = JsonClient::new(RetryPolicy {
            attempts,
            initial_backoff,
            ..RetryPolicy::default()
        });
        self
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<DenseVector>, EmbeddingError> {
        let url = endpoint(&self.base_url, "/v1/embed");
        let resp: EmbedResponse = self
            .client
            .post(
                &url,
                &EmbedRequest {
                    model: &self.model,
                    texts,
                },
            )
            .map_err(embed_failure)?;
        if resp.vectors.len() != texts.len() {
            return Err(EmbeddingError::ProtocolError(format!(
                "{} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        if resp.dimension != self.dimension {
            return Err(EmbeddingError::DimensionViolation {
                index: 0,
                expected: self.dimension,
                found: resp.dimension,
            });
        }
        resp.vectors
            .into_iter()
            .enumerate()
            .map(|(index, v)| {
                if v.len() != self.dimension {
                    return Err(EmbeddingError::DimensionViolation {
                        index,
                        expected: self.dimension,
                        found: v.len(),
                    });
                }
                DenseVector::new(v)
            })
            .collect()
    }
}

/// Body of `GET /v1/health`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub mode: String,
    pub models: Vec<ModelInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub dimension: usize,
}

impl Health {
    pub fn dimension_of(&self, model: &str) -> Option<usize> {
        self.models.iter().find(|m| m.name == model).map(|m| m.dimension)
    }
}

fn embed_failure(e: HttpFailure) -> EmbeddingError {
    match e {
        HttpFailure::Unreachable(m) => EmbeddingError::ProviderUnreachable(m),
        HttpFailure::Status(code, body) => EmbeddingError::ProtocolError(format!("HTTP {code}: {body}")),
        HttpFailure::Decode(m) => EmbeddingError::ProtocolError(m),
    }
}

/// Queries a service's health endpoint. A service still loading (503 on
/// every attempt) is reported as unreachable.
pub fn fetch_health(base_url: &str) -> Result<Health, EmbeddingError> {
    JsonClient::new(RetryPolicy::default())
        .get(&endpoint(base_url, "/v1/health"))
        .map_err(embed_failure)
}

impl EmbeddingProvider for HttpProvider {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<DenseVector>, EmbeddingError> {
        let keys: Vec<String> = texts.iter().map(|t| text_key(t)).collect();
        let mut missing: Vec<&str> = Vec::new();
        {
            let memo = self.memo.lock().expect("memo lock");
            let mut queued = std::collections::HashSet::new();
            for (t, k) in texts.iter().zip(&keys) {
                if !memo.contains_key(k) && queued.insert(k.as_str()) {
                    missing.push(t);
                }
            }
        }
        if !missing.is_empty() {
            let chunks: Vec<&[&str]> = missing.chunks(self.batch_size).collect();
            let results = run_bounded(&chunks, self.max_in_flight, |chunk| self.request(chunk))?;
            let mut memo = self.memo.lock().expect("memo lock");
            for (chunk, vectors) in chunks.iter().zip(results) {
                for (t, v) in chunk.iter().zip(vectors) {
                    memo.insert(text_key(t), v);
                }
            }
        }
        let memo = self.memo.lock().expect("memo lock");
        Ok(keys.iter().map(|k| memo[k].clone()).collect())
    }
}

/// Raw and bounded cosine scores of an unsupervised run.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsupervisedScores {
    /// Cosine in [-1, 1]; use these for ranking metrics.
    pub raw: Vec<f64>,
}

impl UnsupervisedScores {
    /// `max(0, cos)`, for outputs that must lie in [0, 1].
    pub fn clamped(&self) -> Vec<f64> {
        self.raw.iter().map(|c| c.max(0.0)).collect()
    }
}

/// Embeds both sentences of every pair and scores each pair by cosine.
pub fn score_pairs_unsupervised(
    provider: &dyn EmbeddingProvider,
    split: &DatasetSplit,
) -> Result<UnsupervisedScores, EmbeddingError> {
    let (left, right) = embed_pairs(provider, split)?;
    let raw = left
        .iter()
        .zip(&right)
        .map(|(u, v)| cosine(u, v))
        .collect::<Result<_, _>>()?;
    Ok(UnsupervisedScores { raw })
}

/// Embeddings of `(sentence1s, sentence2s)`, validated against the declared
/// dimension.
pub fn embed_pairs(
    provider: &dyn EmbeddingProvider,
    split: &DatasetSplit,
) -> Result<(Vec<DenseVector>, Vec<DenseVector>), EmbeddingError> {
    if split.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let texts: Vec<&str> = split
        .pairs()
        .iter()
        .map(|p| p.sentence1.as_str())
        .chain(split.pairs().iter().map(|p| p.sentence2.as_str()))
        .collect();
    let mut vectors = provider.embed_batch(&texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbeddingError::ProtocolError(format!(
            "provider returned {} vectors for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    for (index, v) in vectors.iter().enumerate() {
        if v.dimension() != provider.dimension() {
            return Err(EmbeddingError::DimensionViolation {
                index,
                expected: provider.dimension(),
                found: v.dimension(),
            });
        }
    }
    let right = vectors.split_off(split.len());
    Ok((vectors, right))
}
