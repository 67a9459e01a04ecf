//! TF-IDF vectorizer.
//!
//! Weights are `tf(t, d) * idf(t, D)` with
//!
//! ```text
//! tf(t, d)  = ln(1 + freq(t, d))
//! idf(t, D) = ln(N / df(t))
//! ```
//!
//! where `N` is the number of fitted documents and `df(t)` the number of
//! documents containing `t`. There is no idf smoothing: a term present in
//! every document weighs 0, and tokens unseen at fit time are dropped.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::PairFeatures;
use crate::textprep::{TextError, TokenStream, TokenizerConfig};

pub const FORMAT_VERSION: u32 = 1;

/// Default width of the hashed projection.
pub const DEFAULT_PROJECTION_DIM: usize = 512;
pub const DEFAULT_PROJECTION_SEED: u64 = 0x5EED;

#[derive(Debug, Error)]
pub enum TfidfError {
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("min_df must be at least 1")]
    InvalidMinDf,
    #[error("projection dimension must be positive")]
    InvalidDimension,
    #[error(transparent)]
    Config(#[from] TextError),
    #[error("unsupported tfidf model version {0}")]
    VersionMismatch(String),
    #[error("corrupt tfidf model: {0}")]
    CorruptModel(String),
}

/// Sorted sparse vector with no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
    dimension: usize,
}

impl SparseVector {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, column: usize) -> f64 {
        self.entries
            .binary_search_by_key(&column, |&(c, _)| c)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        for &(c, w) in &self.entries {
            out[c] = w;
        }
        out
    }
}

/// Fitted vocabulary and document frequencies. Columns follow the
/// lexicographic order of the tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    config: TokenizerConfig,
    corpus_size: usize,
    tokens: Vec<String>,
    document_frequency: Vec<usize>,
    index: HashMap<String, usize>,
}

impl TfidfModel {
    pub fn fit(documents: &[TokenStream], config: TokenizerConfig) -> Result<Self, TfidfError> {
        Self::fit_with_min_df(documents, config, 1)
    }

    /// Keeps tokens occurring in at least `min_df` documents.
    pub fn fit_with_min_df(
        documents: &[TokenStream],
        config: TokenizerConfig,
        min_df: usize,
    ) -> Result<Self, TfidfError> {
        config.validate()?;
        if min_df == 0 {
            return Err(TfidfError::InvalidMinDf);
        }
        if documents.is_empty() {
            return Err(TfidfError::EmptyCorpus);
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        let mut last_doc: HashMap<&str, usize> = HashMap::new();
        for (i, doc) in documents.iter().enumerate() {
            for token in doc.iter() {
                if last_doc.insert(token, i) != Some(i) {
                    *df.entry(token).or_insert(0) += 1;
                }
            }
        }
        let (tokens, document_frequency): (Vec<String>, Vec<usize>) = df
            .into_iter()
            .filter(|&(_, n)| n >= min_df)
            .map(|(t, n)| (t.to_string(), n))
            .unzip();
        Ok(Self::assemble(config, documents.len(), tokens, document_frequency))
    }

    fn assemble(
        config: TokenizerConfig,
        corpus_size: usize,
        tokens: Vec<String>,
        document_frequency: Vec<usize>,
    ) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            config,
            corpus_size,
            tokens,
            document_frequency,
            index,
        }
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    /// `N`, the number of fitted documents.
    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn vocabulary_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, column: usize) -> &str {
        &self.tokens[column]
    }

    pub fn document_frequency(&self, token: &str) -> Option<usize> {
        self.column(token).map(|c| self.document_frequency[c])
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.column(token).map(|c| self.idf_at(c))
    }

    fn idf_at(&self, column: usize) -> f64 {
        (self.corpus_size as f64 / self.document_frequency[column] as f64).ln()
    }

    pub fn transform(&self, doc: &TokenStream) -> SparseVector {
        let mut freq: HashMap<usize, u32> = HashMap::new();
        for token in doc.iter() {
            if let Some(c) = self.column(token) {
                *freq.entry(c).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(usize, f64)> = freq
            .into_iter()
            .map(|(c, n)| (c, (1.0 + f64::from(n)).ln() * self.idf_at(c)))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        entries.sort_unstable_by_key(|&(c, _)| c);
        SparseVector {
            entries,
            dimension: self.tokens.len(),
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let entries = self
            .tokens
            .iter()
            .zip(&self.document_frequency)
            .enumerate()
            .map(|(col, (t, &df))| (t.as_str(), df, col))
            .collect();
        let file = ModelFile {
            version: serde_json::Value::from(FORMAT_VERSION),
            config: self.config.clone(),
            corpus_size: self.corpus_size,
            entries,
        };
        serde_json::to_vec(&file).expect("tfidf model serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, TfidfError> {
        let corrupt = |e: serde_json::Error| TfidfError::CorruptModel(e.to_string());
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(corrupt)?;
        check_version(&value)?;
        let file: ModelFile<String> = serde_json::from_value(value).map_err(corrupt)?;
        file.config.validate()?;
        let n = file.corpus_size;
        if n == 0 {
            return Err(TfidfError::CorruptModel("corpus_size is 0".into()));
        }
        let mut tokens = Vec::with_capacity(file.entries.len());
        let mut dfs = Vec::with_capacity(file.entries.len());
        for (i, (token, df, col)) in file.entries.into_iter().enumerate() {
            if col != i {
                return Err(TfidfError::CorruptModel(format!(
                    "entry {i} has column {col}"
                )));
            }
            if df == 0 || df > n {
                return Err(TfidfError::CorruptModel(format!(
                    "document frequency {df} of {token:?} outside 1..={n}"
                )));
            }
            tokens.push(token);
            dfs.push(df);
        }
        let model = Self::assemble(file.config, n, tokens, dfs);
        if model.index.len() != model.tokens.len() {
            return Err(TfidfError::CorruptModel("duplicate tokens".into()));
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    version: serde_json::Value,
    config: TokenizerConfig,
    corpus_size: usize,
    entries: Vec<(T, usize, usize)>,
}

fn check_version(value: &serde_json::Value) -> Result<(), TfidfError> {
    match value.get("version") {
        Some(v) if v.as_u64() == Some(u64::from(FORMAT_VERSION)) => Ok(()),
        Some(v) => Err(TfidfError::VersionMismatch(v.to_string())),
        None => Err(TfidfError::CorruptModel("missing version".into())),
    }
}

/// Signed feature hashing of vocabulary columns into a fixed number of
/// buckets. Bucket and sign derive from SHA-256 of the seed and token, so the
/// mapping is identical on every platform.
#[derive(Debug, Clone, PartialEq)]
pub struct HashProjection {
    dimension: usize,
    seed: u64,
    slots: Vec<(usize, f64)>,
}

impl HashProjection {
    pub fn new(model: &TfidfModel, dimension: usize, seed: u64) -> Result<Self, TfidfError> {
        if dimension == 0 {
            return Err(TfidfError::InvalidDimension);
        }
        let slots = model
            .tokens
            .iter()
            .map(|t| hash_slot(t, dimension, seed))
            .collect();
        Ok(Self {
            dimension,
            seed,
            slots,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bucket and sign assigned to a vocabulary column.
    pub fn slot(&self, column: usize) -> (usize, f64) {
        self.slots[column]
    }

    pub fn project(&self, v: &SparseVector) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        for &(c, w) in v.entries() {
            let (bucket, sign) = self.slots[c];
            out[bucket] += sign * w;
        }
        out
    }
}

fn hash_slot(token: &str, dimension: usize, seed: u64) -> (usize, f64) {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(token.as_bytes())
        .finalize();
    let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
    ((h % dimension as u64) as usize, sign)
}

/// `[|u - v|, u * v, cos(u, v)]` of the projected TF-IDF vectors of two
/// token streams.
pub fn pair_features(
    model: &TfidfModel,
    s1: &TokenStream,
    s2: &TokenStream,
    projection: &HashProjection,
) -> PairFeatures {
    let u = projection.project(&model.transform(s1));
    let v = projection.project(&model.transform(s2));
    PairFeatures::from_dense(&u, &v)
}
