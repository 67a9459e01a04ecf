//! Translation providers, the TSV translation cache, and split translation.
//!
//! Cache and table files are tab-separated UTF-8. Inside a field, `\` is
//! written `\\`, a tab `\t`, a newline `\n` and a carriage return `\r`.
//!
//! - table file: `source text TAB translated text`
//! - cache file: `sha256(source) TAB source lang TAB target lang TAB translation`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, DatasetSplit, LanguageCode, SentencePair};
use crate::http::{endpoint, run_bounded, HttpFailure, JsonClient, RetryPolicy};
use crate::text_key;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranslationError {
    /// A table provider has no entry for the text at `index` of the request.
    #[error("no translation for text #{index}")]
    Missing { index: usize },
    #[error("no translation for a sentence of pair {pair_id}")]
    TranslationMissing { pair_id: String },
    #[error("translation provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("split language {found} does not match translator source {expected}")]
    LanguageMismatch {
        expected: LanguageCode,
        found: LanguageCode,
    },
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("{file} line {line}: {reason}")]
    FileFormat {
        file: &'static str,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for TranslationError {
    fn from(e: std::io::Error) -> Self {
        TranslationError::Io(e.to_string())
    }
}

pub trait TranslationProvider: Send + Sync {
    /// Stable identifier recorded in provenance.
    fn id(&self) -> String;

    fn source(&self) -> &LanguageCode;

    fn target(&self) -> &LanguageCode;

    /// One translation per text, in request order.
    fn translate(&self, texts: &[&str]) -> Result<Vec<String>, TranslationError>;
}

fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(field: &str) -> Result<String, String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape sequence \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

fn read_tsv<R: BufRead>(
    reader: R,
    file: &'static str,
    columns: usize,
) -> Result<Vec<(usize, Vec<String>)>, TranslationError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let fail = |reason: String| TranslationError::FileFormat {
            file,
            line: i + 1,
            reason,
        };
        if fields.len() != columns {
            return Err(fail(format!("expected {columns} fields, found {}", fields.len())));
        }
        let fields = fields
            .into_iter()
            .map(unescape)
            .collect::<Result<Vec<_>, _>>()
            .map_err(fail)?;
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

/// Dictionary lookup of whole sentences; misses are errors.
#[derive(Debug, Clone)]
pub struct TableProvider {
    id: String,
    source: LanguageCode,
    target: LanguageCode,
    table: HashMap<String, String>,
}

impl TableProvider {
    pub fn new<I, S, T>(id: &str, source: LanguageCode, target: LanguageCode, entries: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        Self {
            id: id.to_string(),
            source,
            target,
            table: entries
                .into_iter()
                .map(|(s, t)| (s.into(), t.into()))
                .collect(),
        }
    }

    pub fn read<R: BufRead>(
        reader: R,
        id: &str,
        source: LanguageCode,
        target: LanguageCode,
    ) -> Result<Self, TranslationError> {
        let mut table = HashMap::new();
        for (line, mut f) in read_tsv(reader, "translation table", 2)? {
            let translation = f.pop().expect("2 fields");
            let text = f.pop().expect("2 fields");
            if let Some(prev) = table.insert(text, translation.clone()) {
                if prev != translation {
                    return Err(TranslationError::FileFormat {
                        file: "translation table",
                        line,
                        reason: "conflicting duplicate entry".into(),
                    });
                }
            }
        }
        Ok(Self {
            id: id.to_string(),
            source,
            target,
            table,
        })
    }

    pub fn open(path: &Path, source: LanguageCode, target: LanguageCode) -> Result<Self, TranslationError> {
        let file = std::fs::File::open(path)
            .map_err(|e| TranslationError::Io(format!("{}: {e}", path.display())))?;
        Self::read(
            std::io::BufReader::new(file),
            &format!("table:{}", path.display()),
            source,
            target,
        )
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl TranslationProvider for TableProvider {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn source(&self) -> &LanguageCode {
        &self.source
    }

    fn target(&self) -> &LanguageCode {
        &self.target
    }

    fn translate(&self, texts: &[&str]) -> Result<Vec<String>, TranslationError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.table
                    .get(*t)
                    .cloned()
                    .ok_or(TranslationError::Missing { index })
            })
            .collect()
    }
}

/// Returns every text unchanged.
#[derive(Debug, Clone)]
pub struct IdentityProvider {
    source: LanguageCode,
    target: LanguageCode,
}

impl IdentityProvider {
    pub fn new(source: LanguageCode, target: LanguageCode) -> Self {
        Self { source, target }
    }
}

impl TranslationProvider for IdentityProvider {
    fn id(&self) -> String {
        "identity".into()
    }

    fn source(&self) -> &LanguageCode {
        &self.source
    }

    fn target(&self) -> &LanguageCode {
        &self.target
    }

    fn translate(&self, texts: &[&str]) -> Result<Vec<String>, TranslationError> {
        Ok(texts.iter().map(|t| t.to_string()).collect())
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    texts: &'a [&'a str],
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    translations: Vec<String>,
}

/// Client for a `/v1/translate` service.
pub struct HttpTranslator {
    base_url: String,
    source: LanguageCode,
    target: LanguageCode,
    batch_size: usize,
    max_in_flight: usize,
    client: JsonClient,
}

impl HttpTranslator {
    pub fn new(base_url: &str, source: LanguageCode, target: LanguageCode) -> Self {
        Self {
            base_url: base_url.to_string(),
            source,
            target,
            batch_size: 32,
            max_in_flight: 4,
            client: JsonClient::new(RetryPolicy::default()),
        }
    }

    pub fn with_retries(mut self, attempts: u32, initial_backoff: std::time::Duration) -> Self {
        self.client = JsonClient::new(RetryPolicy {
            attempts,
            initial_backoff,
            ..RetryPolicy::default()
        });
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<String>, TranslationError> {
        let url = endpoint(&self.base_url, "/v1/translate");
        let body = TranslateRequest {
            texts,
            source: self.source.as_str(),
            target: self.target.as_str(),
        };
        let resp: TranslateResponse = self.client.post(&url, &body).map_err(|e| match e {
            HttpFailure::Unreachable(m) => TranslationError::ProviderUnreachable(m),
            HttpFailure::Status(code, body) => {
                TranslationError::ProtocolError(format!("HTTP {code}: {body}"))
            }
            HttpFailure::Decode(m) => TranslationError::ProtocolError(m),
        })?;
        if resp.translations.len() != texts.len() {
            return Err(TranslationError::ProtocolError(format!(
                "{} translations for {} texts",
                resp.translations.len(),
                texts.len()
            )));
        }
        Ok(resp.translations)
    }
}

impl TranslationProvider for HttpTranslator {
    fn id(&self) -> String {
        format!("http:{}", self.base_url)
    }

    fn source(&self) -> &LanguageCode {
        &self.source
    }

    fn target(&self) -> &LanguageCode {
        &self.target
    }

    fn translate(&self, texts: &[&str]) -> Result<Vec<String>, TranslationError> {
        let chunks: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let parts = run_bounded(&chunks, self.max_in_flight, |c| self.request(c))?;
        Ok(parts.into_iter().flatten().collect())
    }
}

/// Persistent translations keyed by `(sha256(source text), source, target)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranslationCache {
    entries: BTreeMap<(String, String, String), String>,
}

impl TranslationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, TranslationError> {
        let mut cache = Self::new();
        for (line, f) in read_tsv(reader, "translation cache", 4)? {
            let [hash, src, tgt, text]: [String; 4] = f.try_into().expect("4 fields");
            if hash.len() != 64 || !hash.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
                return Err(TranslationError::FileFormat {
                    file: "translation cache",
                    line,
                    reason: format!("{hash:?} is not a lowercase hex SHA-256"),
                });
            }
            if cache.entries.insert((hash, src, tgt), text).is_some() {
                return Err(TranslationError::FileFormat {
                    file: "translation cache",
                    line,
                    reason: "duplicate key".into(),
                });
            }
        }
        Ok(cache)
    }

    /// Missing file reads as an empty cache.
    pub fn open(path: &Path) -> Result<Self, TranslationError> {
        match std::fs::File::open(path) {
            Ok(f) => Self::read(std::io::BufReader::new(f)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(TranslationError::Io(format!("{}: {e}", path.display()))),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), TranslationError> {
        for ((hash, src, tgt), text) in &self.entries {
            writeln!(out, "{hash}\t{}\t{}\t{}", escape(src), escape(tgt), escape(text))?;
        }
        Ok(())
    }

    pub fn get(&self, text: &str, source: &LanguageCode, target: &LanguageCode) -> Option<&str> {
        self.entries
            .get(&(text_key(text), source.to_string(), target.to_string()))
            .map(String::as_str)
    }

    pub fn insert(&mut self, text: &str, source: &LanguageCode, target: &LanguageCode, translation: String) {
        self.entries
            .insert((text_key(text), source.to_string(), target.to_string()), translation);
    }

    /// Adds the entries of `other`; on a key collision `other` wins.
    pub fn merge(&mut self, other: TranslationCache) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairProvenance {
    pub sentence1_hash: String,
    pub sentence2_hash: String,
    pub provider: String,
}

/// A split and its translation, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslatedDataset {
    pub original: DatasetSplit,
    pub translated: DatasetSplit,
    pub provenance: BTreeMap<String, PairProvenance>,
}

impl TranslatedDataset {
    /// Distinct source-sentence hashes across all pairs.
    pub fn source_hashes(&self) -> BTreeSet<&str> {
        self.provenance
            .values()
            .flat_map(|p| [p.sentence1_hash.as_str(), p.sentence2_hash.as_str()])
            .collect()
    }
}

/// Translates both sentences of every pair, keeping ids, order and gold
/// scores. The cache, if given, is consulted first and receives every new
/// translation; distinct uncached texts go to the provider in one call.
pub fn translate_split(
    provider: &dyn TranslationProvider,
    split: &DatasetSplit,
    mut cache: Option<&mut TranslationCache>,
) -> Result<TranslatedDataset, TranslationError> {
    if split.language() != provider.source() {
        return Err(TranslationError::LanguageMismatch {
            expected: provider.source().clone(),
            found: split.language().clone(),
        });
    }
    let (src, tgt) = (provider.source(), provider.target());
    let mut resolved: HashMap<&str, String> = HashMap::new();
    let mut pending: Vec<&str> = Vec::new();
    let mut queued = BTreeSet::new();
    for pair in split.pairs() {
        for text in [pair.sentence1.as_str(), pair.sentence2.as_str()] {
            if resolved.contains_key(text) || queued.contains(text) {
                continue;
            }
            match cache.as_deref().and_then(|c| c.get(text, src, tgt)) {
                Some(t) => {
                    resolved.insert(text, t.to_string());
                }
                None => {
                    queued.insert(text);
                    pending.push(text);
                }
            }
        }
    }
    if !pending.is_empty() {
        let out = provider.translate(&pending).map_err(|e| match e {
            TranslationError::Missing { index } => {
                let text = pending.get(index).copied().unwrap_or_default();
                let pair_id = split
                    .pairs()
                    .iter()
                    .find(|p| p.sentence1 == text || p.sentence2 == text)
                    .map(|p| p.pair_id.clone())
                    .unwrap_or_default();
                TranslationError::TranslationMissing { pair_id }
            }
            other => other,
        })?;
        if out.len() != pending.len() {
            return Err(TranslationError::ProtocolError(format!(
                "{} translations for {} texts",
                out.len(),
                pending.len()
            )));
        }
        for (text, translation) in pending.iter().zip(out) {
            if let Some(c) = cache.as_deref_mut() {
                c.insert(text, src, tgt, translation.clone());
            }
            resolved.insert(text, translation);
        }
    }

    let provider_id = provider.id();
    let mut provenance = BTreeMap::new();
    let pairs = split
        .pairs()
        .iter()
        .map(|p| {
            provenance.insert(
                p.pair_id.clone(),
                PairProvenance {
                    sentence1_hash: text_key(&p.sentence1),
                    sentence2_hash: text_key(&p.sentence2),
                    provider: provider_id.clone(),
                },
            );
            SentencePair {
                pair_id: p.pair_id.clone(),
                sentence1: resolved[p.sentence1.as_str()].clone(),
                sentence2: resolved[p.sentence2.as_str()].clone(),
                score: p.score,
                language: tgt.clone(),
            }
        })
        .collect();
    let translated = DatasetSplit::new(tgt.clone(), split.split(), pairs)?;
    Ok(TranslatedDataset {
        original: split.clone(),
        translated,
        provenance,
    })
}
