use thiserror::Error;

use crate::corpus::CorpusError;
use crate::embeddings::EmbeddingError;
use crate::heads::HeadError;
use crate::metrics::MetricError;
use crate::textprep::TextError;
use crate::tfidf::TfidfError;
use crate::translation::TranslationError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Umbrella error for the multi-stage pipelines.
///
/// Each module has its own error type; this one only aggregates them so the
/// pipelines can propagate with `?`.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Tfidf(#[from] TfidfError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("evaluation split has no gold scores (first unlabeled pair: {pair_id})")]
    EvalUnlabeled { pair_id: String },
    #[error("training split has no gold score for pair {pair_id}")]
    TrainUnlabeled { pair_id: String },
    #[error("the embedding featurizer needs an embedding provider")]
    MissingEmbedder,
    #[error("featurizer kind mismatch: {0}")]
    FeaturizerMismatch(String),
}
