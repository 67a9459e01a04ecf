//! Text normalization and n-gram tokenization feeding the TF-IDF vectorizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// Joins the components of an n-gram token (U+241F SYMBOL FOR UNIT SEPARATOR).
pub const NGRAM_SEPARATOR: char = '\u{241F}';

pub const MAX_NGRAM: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("invalid n-gram range {min}..={max} (need 1 <= min <= max <= {MAX_NGRAM})")]
    InvalidNgramRange { min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenUnit {
    Word,
    Character,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub unit: TokenUnit,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            ngram_min: 1,
            ngram_max: 1,
            unit: TokenUnit::Word,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<(), TextError> {
        if self.ngram_min < 1 || self.ngram_min > self.ngram_max || self.ngram_max > MAX_NGRAM {
            return Err(TextError::InvalidNgramRange {
                min: self.ngram_min,
                max: self.ngram_max,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    tokens: Vec<String>,
}

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for TokenStream {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self {
            tokens: iter.into_iter().map(Into::into).filter(|t: &String| !t.is_empty()).collect(),
        }
    }
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// NFC, optional lowercasing and punctuation stripping, whitespace collapse.
pub fn normalize(text: &str, config: &TokenizerConfig) -> String {
    let mut s: String = text.nfc().collect();
    if config.lowercase {
        s = s.to_lowercase();
    }
    if config.strip_punctuation {
        s = s
            .chars()
            .map(|c| if is_punctuation(c) { ' ' } else { c })
            .collect();
    }
    // Lowercasing can produce decomposed sequences (e.g. U+0130).
    if config.lowercase {
        s = s.nfc().collect();
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits normalized text into units and emits contiguous n-grams.
///
/// For each start position, n-grams are emitted for n ascending through
/// `ngram_min..=ngram_max`. The separator character is never part of a unit:
/// in word mode it acts as whitespace, in character mode it is skipped.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> TokenStream {
    let units: Vec<String> = match config.unit {
        TokenUnit::Word => text
            .split(|c: char| c.is_whitespace() || c == NGRAM_SEPARATOR)
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect(),
        TokenUnit::Character => text
            .chars()
            .filter(|&c| c != NGRAM_SEPARATOR)
            .map(String::from)
            .collect(),
    };
    let (lo, hi) = (config.ngram_min.max(1), config.ngram_max.max(1));
    let mut tokens = Vec::new();
    let mut buf = String::new();
    for start in 0..units.len() {
        for n in lo..=hi {
            let Some(window) = units.get(start..start + n) else {
                break;
            };
            buf.clear();
            for (k, unit) in window.iter().enumerate() {
                if k > 0 {
                    buf.push(NGRAM_SEPARATOR);
                }
                buf.push_str(unit);
            }
            tokens.push(buf.clone());
        }
    }
    TokenStream { tokens }
}

/// `tokenize(normalize(text))`.
pub fn analyze(text: &str, config: &TokenizerConfig) -> TokenStream {
    tokenize(&normalize(text, config), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(min: usize, max: usize) -> TokenizerConfig {
        TokenizerConfig {
            ngram_min: min,
            ngram_max: max,
            ..Default::default()
        }
    }

    #[test]
    fn normalize_examples() {
        let cfg = TokenizerConfig::default();
        assert_eq!(normalize("Hello,  WORLD!", &cfg), "hello world");
        assert_eq!(normalize("", &cfg), "");
        assert_eq!(normalize("नमस्ते दुनिया", &cfg), "नमस्ते दुनिया");
        let keep = TokenizerConfig {
            lowercase: false,
            strip_punctuation: false,
            ..cfg
        };
        assert_eq!(normalize("  Hi,\tthere \n", &keep), "Hi, there");
        // Devanagari danda is punctuation.
        assert_eq!(normalize("ठीक है।", &TokenizerConfig::default()), "ठीक है");
    }

    #[test]
    fn normalize_applies_nfc() {
        let decomposed = "e\u{0301}";
        assert_eq!(normalize(decomposed, &TokenizerConfig::default()), "\u{00e9}");
    }

    #[test]
    fn tokenize_examples() {
        let sep = NGRAM_SEPARATOR;
        assert_eq!(tokenize("a b c", &words(1, 1)).tokens(), ["a", "b", "c"]);
        assert_eq!(
            tokenize("a b c", &words(1, 2)).tokens(),
            ["a".to_string(), format!("a{sep}b"), "b".into(), format!("b{sep}c"), "c".into()]
        );
        let chars = TokenizerConfig {
            unit: TokenUnit::Character,
            ..words(2, 2)
        };
        assert_eq!(tokenize("ab", &chars).tokens(), [format!("a{sep}b")]);
        assert_eq!(tokenize("a b", &TokenizerConfig { unit: TokenUnit::Character, ..words(1, 1) }).tokens(), ["a", " ", "b"]);
        assert!(tokenize("", &words(1, 3)).is_empty());
    }

    #[test]
    fn separator_never_inside_a_unit() {
        let s = format!("x{}y z", NGRAM_SEPARATOR);
        assert_eq!(tokenize(&s, &words(1, 1)).tokens(), ["x", "y", "z"]);
    }

    #[test]
    fn config_validation() {
        assert!(words(1, 5).validate().is_ok());
        assert!(words(0, 1).validate().is_err());
        assert!(words(3, 2).validate().is_err());
        assert!(words(1, 6).validate().is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(text in "\\PC{0,40}", lower: bool, strip: bool) {
            let cfg = TokenizerConfig { lowercase: lower, strip_punctuation: strip, ..Default::default() };
            let once = normalize(&text, &cfg);
            prop_assert_eq!(normalize(&once, &cfg), once);
        }

        #[test]
        fn ngram_counts(text in "[a-e ]{0,40}", n in 1usize..=5) {
            let cfg = TokenizerConfig::default();
            let norm = normalize(&text, &cfg);
            let unigrams = tokenize(&norm, &cfg).len();
            prop_assert_eq!(unigrams, norm.split_whitespace().count());
            let exact = tokenize(&norm, &words(n, n)).len();
            prop_assert_eq!(exact, (unigrams + 1).saturating_sub(n));
            prop_assert!(tokenize(&norm, &words(1, n)).iter().all(|t| !t.is_empty()));
        }
    }
}
