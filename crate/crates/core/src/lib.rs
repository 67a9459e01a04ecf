//! # semrel-core
//!
//! Building blocks for scoring semantic textual relatedness (STR) between
//! sentence pairs, in three settings:
//!
//! - **supervised** (track A): TF-IDF sentence vectors are turned into
//!   fixed-width pair features and fed to a regression head
//!   ([`heads::SvrModel`] or [`heads::GbtModel`]);
//! - **unsupervised** (track B): sentence embeddings from an external
//!   [`embeddings::EmbeddingProvider`] are compared by cosine similarity;
//! - **cross-lingual** (track C): a labeled training set is machine-translated
//!   into the evaluation language and then used as in track A.
//!
//! Every setting is evaluated with [`metrics`], which computes Spearman and
//! Pearson correlation plus thresholded F1 / accuracy / recall.
//!
//! ```
//! use semrel_core::textprep::{normalize, tokenize, TokenizerConfig};
//! use semrel_core::tfidf::TfidfModel;
//!
//! let config = TokenizerConfig::default();
//! let docs: Vec<_> = ["The cat sat.", "A dog sat!"]
//!     .iter()
//!     .map(|t| tokenize(&normalize(t, &config), &config))
//!     .collect();
//! let model = TfidfModel::fit(&docs, config).unwrap();
//! assert_eq!(model.corpus_size(), 2);
//! // "sat" occurs in every document, so its idf (and weight) is zero.
//! let v = model.transform(&docs[0]);
//! assert_eq!(v.entries().len(), 2);
//! ```

pub mod corpus;
pub mod crosslingual;
pub mod embeddings;
mod error;
pub mod features;
pub mod heads;
mod http;
pub mod metrics;
pub mod pipeline;
pub mod textprep;
pub mod tfidf;
pub mod translation;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of the UTF-8 bytes of `text`.
///
/// Used as the lookup key in embedding and translation cache files.
pub fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
