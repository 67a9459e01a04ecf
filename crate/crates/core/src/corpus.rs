//! SemRel-style sentence-pair datasets.
//!
//! Two CSV layouts are accepted:
//!
//! - `text3`: `PairID,Text[,Score]`, where `Text` holds both sentences
//!   separated by a newline inside a quoted field;
//! - `cols4`: `PairID,Sentence1,Sentence2[,Score]`.
//!
//! The layout is detected from the header names; [`CsvFormat`] forces one
//! when the header is not recognized. Rows keep their on-disk order, since
//! prediction files are aligned row by row with their input.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("row {row}: malformed row: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: score {score} outside [0, 1]")]
    ScoreOutOfRange { row: usize, score: f64 },
    #[error("row {row}: duplicate pair id {pair_id:?}")]
    DuplicatePairId { row: usize, pair_id: String },
    #[error("row {row}: empty sentence")]
    EmptySentence { row: usize },
    #[error("row {row}: pair language {found} differs from split language {expected}")]
    LanguageMismatch {
        row: usize,
        expected: LanguageCode,
        found: LanguageCode,
    },
    #[error("cannot detect CSV layout from header {0:?}; pass an explicit format")]
    UnknownLayout(Vec<String>),
    #[error("{scores} scores for {pairs} pairs")]
    LengthMismatch { pairs: usize, scores: usize },
    #[error("score for pair {pair_id:?} is not finite")]
    NonFiniteScore { pair_id: String },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for CorpusError {
    fn from(e: csv::Error) -> Self {
        CorpusError::Csv(e.to_string())
    }
}

/// Language tag of a split.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LanguageCode {
    Eng,
    Hin,
    Mar,
    Esp,
    Other(String),
}

impl LanguageCode {
    pub fn as_str(&self) -> &str {
        match self {
            LanguageCode::Eng => "eng",
            LanguageCode::Hin => "hin",
            LanguageCode::Mar => "mar",
            LanguageCode::Esp => "esp",
            LanguageCode::Other(s) => s,
        }
    }

    /// English display name used in report tables.
    pub fn display_name(&self) -> &str {
        match self {
            LanguageCode::Eng => "English",
            LanguageCode::Hin => "Hindi",
            LanguageCode::Mar => "Marathi",
            LanguageCode::Esp => "Spanish",
            LanguageCode::Other(s) => s,
        }
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageCode {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tag = s.trim().to_ascii_lowercase();
        Ok(match tag.as_str() {
            "eng" | "en" => LanguageCode::Eng,
            "hin" | "hi" => LanguageCode::Hin,
            "mar" | "mr" => LanguageCode::Mar,
            "esp" | "es" | "spa" => LanguageCode::Esp,
            _ => LanguageCode::Other(tag),
        })
    }
}

impl Serialize for LanguageCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LanguageCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap_or_else(|e| match e {}))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub pair_id: String,
    pub sentence1: String,
    pub sentence2: String,
    /// Gold relatedness in [0, 1]; `None` for unlabeled test data.
    pub score: Option<f64>,
    pub language: LanguageCode,
}

/// An ordered, validated list of pairs sharing one language.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSplit {
    language: LanguageCode,
    split: Split,
    pairs: Vec<SentencePair>,
}

impl DatasetSplit {
    /// Validates every pair invariant; row numbers in errors are 1-based
    /// positions in `pairs`.
    pub fn new(
        language: LanguageCode,
        split: Split,
        pairs: Vec<SentencePair>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for (i, pair) in pairs.iter().enumerate() {
            let row = i + 1;
            if pair.language != language {
                return Err(CorpusError::LanguageMismatch {
                    row,
                    expected: language,
                    found: pair.language.clone(),
                });
            }
            check_pair(row, pair)?;
            if !seen.insert(pair.pair_id.as_str()) {
                return Err(CorpusError::DuplicatePairId {
                    row,
                    pair_id: pair.pair_id.clone(),
                });
            }
        }
        Ok(Self {
            language,
            split,
            pairs,
        })
    }

    pub fn language(&self) -> &LanguageCode {
        &self.language
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// True when every pair carries a gold score.
    pub fn is_labeled(&self) -> bool {
        self.pairs.iter().all(|p| p.score.is_some())
    }

    /// Gold scores in row order, or the id of the first unlabeled pair.
    pub fn gold_scores(&self) -> Result<Vec<f64>, &str> {
        self.pairs
            .iter()
            .map(|p| p.score.ok_or(p.pair_id.as_str()))
            .collect()
    }
}

fn check_pair(row: usize, pair: &SentencePair) -> Result<(), CorpusError> {
    if let Some(score) = pair.score {
        if !(0.0..=1.0).contains(&score) {
            return Err(CorpusError::ScoreOutOfRange { row, score });
        }
    }
    if pair.sentence1.trim().is_empty() || pair.sentence2.trim().is_empty() {
        return Err(CorpusError::EmptySentence { row });
    }
    Ok(())
}

/// CSV layout selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvFormat {
    /// Detect from header names.
    #[default]
    Auto,
    Text3,
    Cols4,
}

impl FromStr for CsvFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(CsvFormat::Auto),
            "text3" => Ok(CsvFormat::Text3),
            "cols4" => Ok(CsvFormat::Cols4),
            other => Err(format!("unknown format {other:?} (expected auto, text3 or cols4)")),
        }
    }
}

/// Column positions resolved from the header.
#[derive(Debug)]
enum Layout {
    Text3 {
        id: usize,
        text: usize,
        score: Option<usize>,
    },
    Cols4 {
        id: usize,
        s1: usize,
        s2: usize,
        score: Option<usize>,
    },
}

impl Layout {
    fn width(&self) -> usize {
        match self {
            Layout::Text3 { score, .. } => 2 + usize::from(score.is_some()),
            Layout::Cols4 { score, .. } => 3 + usize::from(score.is_some()),
        }
    }
}

fn header_key(name: &str) -> String {
    name.trim()
        .trim_start_matches('\u{feff}')
        .chars()
        .filter(|c| !matches!(c, '_' | ' ' | '-'))
        .flat_map(char::to_lowercase)
        .collect()
}

fn detect_layout(header: &csv::StringRecord, format: CsvFormat) -> Result<Layout, CorpusError> {
    let names: Vec<String> = header.iter().map(header_key).collect();
    let find = |cands: &[&str]| names.iter().position(|n| cands.contains(&n.as_str()));
    let n = names.len();
    match format {
        CsvFormat::Text3 if n == 2 || n == 3 => Ok(Layout::Text3 {
            id: 0,
            text: 1,
            score: (n == 3).then_some(2),
        }),
        CsvFormat::Cols4 if n == 3 || n == 4 => Ok(Layout::Cols4 {
            id: 0,
            s1: 1,
            s2: 2,
            score: (n == 4).then_some(3),
        }),
        CsvFormat::Text3 | CsvFormat::Cols4 => Err(CorpusError::MalformedRow {
            row: 0,
            reason: format!("header has {n} columns, which does not fit the {format:?} layout"),
        }),
        CsvFormat::Auto => {
            let id = find(&["pairid", "id"]);
            let score = find(&["score", "label", "goldscore"]);
            let text = find(&["text"]);
            let s1 = find(&["sentence1", "text1", "s1"]);
            let s2 = find(&["sentence2", "text2", "s2"]);
            let unknown = || CorpusError::UnknownLayout(header.iter().map(String::from).collect());
            let id = id.ok_or_else(unknown)?;
            let layout = match (text, s1, s2) {
                (Some(text), None, None) => Layout::Text3 { id, text, score },
                (None, Some(s1), Some(s2)) => Layout::Cols4 { id, s1, s2, score },
                _ => return Err(unknown()),
            };
            if layout.width() != n {
                return Err(unknown());
            }
            Ok(layout)
        }
    }
}

fn parse_score(row: usize, raw: &str) -> Result<Option<f64>, CorpusError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let score: f64 = raw.parse().map_err(|_| CorpusError::MalformedRow {
        row,
        reason: format!("score {raw:?} is not a decimal number"),
    })?;
    if !(0.0..=1.0).contains(&score) {
        return Err(CorpusError::ScoreOutOfRange { row, score });
    }
    Ok(Some(score))
}

fn split_text(row: usize, text: &str) -> Result<(String, String), CorpusError> {
    let (a, b) = text.split_once('\n').ok_or_else(|| CorpusError::MalformedRow {
        row,
        reason: "Text field has no embedded newline separating the two sentences".into(),
    })?;
    Ok((a.trim().to_string(), b.trim().to_string()))
}

/// Parses a SemRel CSV, detecting the layout from its header.
pub fn parse_semrel_csv(
    bytes: &[u8],
    language: LanguageCode,
    split: Split,
) -> Result<DatasetSplit, CorpusError> {
    parse_semrel_csv_as(bytes, language, split, CsvFormat::Auto)
}

/// Parses a SemRel CSV with an explicit layout (or [`CsvFormat::Auto`]).
///
/// Errors carry the 1-based data row number (the header is row 0).
pub fn parse_semrel_csv_as(
    bytes: &[u8],
    language: LanguageCode,
    split: Split,
    format: CsvFormat,
) -> Result<DatasetSplit, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return DatasetSplit::new(language, split, Vec::new());
    }
    let layout = detect_layout(&header, format)?;
    let width = layout.width();

    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != width {
            return Err(CorpusError::MalformedRow {
                row,
                reason: format!("expected {width} columns, found {}", record.len()),
            });
        }
        let (pair_id, sentence1, sentence2, score) = match layout {
            Layout::Text3 { id, text, score } => {
                let (s1, s2) = split_text(row, &record[text])?;
                (&record[id], s1, s2, score.map(|c| &record[c]))
            }
            Layout::Cols4 { id, s1, s2, score } => (
                &record[id],
                record[s1].trim().to_string(),
                record[s2].trim().to_string(),
                score.map(|c| &record[c]),
            ),
        };
        let pair_id = pair_id.trim().to_string();
        if pair_id.is_empty() {
            return Err(CorpusError::MalformedRow {
                row,
                reason: "empty pair id".into(),
            });
        }
        let score = match score {
            Some(raw) => parse_score(row, raw)?,
            None => None,
        };
        let pair = SentencePair {
            pair_id,
            sentence1,
            sentence2,
            score,
            language: language.clone(),
        };
        check_pair(row, &pair)?;
        if !seen.insert(pair.pair_id.clone()) {
            return Err(CorpusError::DuplicatePairId {
                row,
                pair_id: pair.pair_id,
            });
        }
        pairs.push(pair);
    }
    Ok(DatasetSplit {
        language,
        split,
        pairs,
    })
}

/// Writes a split in the explicit four-column layout.
pub fn write_semrel_csv(split: &DatasetSplit) -> Result<Vec<u8>, CorpusError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["PairID", "Sentence1", "Sentence2", "Score"])?;
    for p in split.pairs() {
        let score = p.score.map(|s| s.to_string()).unwrap_or_default();
        writer.write_record([&p.pair_id, &p.sentence1, &p.sentence2, &score])?;
    }
    writer
        .into_inner()
        .map_err(|e| CorpusError::Csv(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitCount {
    pub language: LanguageCode,
    pub split: Split,
    pub count: usize,
}

/// Pair counts per (language, split), in first-seen order. Splits sharing a
/// key are summed.
pub fn split_summary(splits: &[DatasetSplit]) -> Vec<SplitCount> {
    let mut rows: Vec<SplitCount> = Vec::new();
    for s in splits {
        match rows
            .iter_mut()
            .find(|r| r.language == s.language && r.split == s.split)
        {
            Some(r) => r.count += s.len(),
            None => rows.push(SplitCount {
                language: s.language.clone(),
                split: s.split,
                count: s.len(),
            }),
        }
    }
    rows
}

pub const PREDICTION_HEADER: [&str; 2] = ["PairID", "Pred_Score"];

/// Renders a `PairID,Pred_Score` submission file in split order.
pub fn write_predictions(split: &DatasetSplit, scores: &[f64]) -> Result<Vec<u8>, CorpusError> {
    if split.len() != scores.len() {
        return Err(CorpusError::LengthMismatch {
            pairs: split.len(),
            scores: scores.len(),
        });
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(PREDICTION_HEADER)?;
    for (pair, &score) in split.pairs().iter().zip(scores) {
        if !score.is_finite() {
            return Err(CorpusError::NonFiniteScore {
                pair_id: pair.pair_id.clone(),
            });
        }
        writer.write_record([pair.pair_id.as_str(), &format!("{score:.8}")])?;
    }
    writer
        .into_inner()
        .map_err(|e| CorpusError::Csv(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub pair_id: String,
    pub score: f64,
}

/// Reads a `PairID,Pred_Score` file back. Scores may be any finite real
/// (raw cosines can be negative).
pub fn parse_predictions(bytes: &[u8]) -> Result<Vec<Prediction>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != 2 {
            return Err(CorpusError::MalformedRow {
                row,
                reason: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let pair_id = record[0].trim().to_string();
        let score: f64 = record[1]
            .trim()
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| CorpusError::MalformedRow {
                row,
                reason: format!("prediction {:?} is not a finite number", &record[1]),
            })?;
        if !seen.insert(pair_id.clone()) {
            return Err(CorpusError::DuplicatePairId { row, pair_id });
        }
        out.push(Prediction { pair_id, score });
    }
    Ok(out)
}
