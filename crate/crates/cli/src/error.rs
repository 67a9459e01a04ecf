use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use semrel_core::corpus::CorpusError;
use semrel_core::embeddings::EmbeddingError;
use semrel_core::metrics::MetricError;
use semrel_core::translation::TranslationError;

/// Error class reported in the `kind` field of the error JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Io,
    Config,
    Parse,
    Model,
    Provider,
    Mismatch,
    Data,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Io | ErrorKind::Config | ErrorKind::Parse | ErrorKind::Model => 2,
            ErrorKind::Provider => 3,
            ErrorKind::Mismatch | ErrorKind::Data => 4,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            details: None,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new(ErrorKind::Io, format!("{}: {err}", path.display()))
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

fn corpus_kind(e: &CorpusError) -> ErrorKind {
    match e {
        CorpusError::LanguageMismatch { .. } | CorpusError::LengthMismatch { .. } => {
            ErrorKind::Mismatch
        }
        _ => ErrorKind::Parse,
    }
}

fn embedding_kind(e: &EmbeddingError) -> ErrorKind {
    match e {
        EmbeddingError::CacheFormat { .. } => ErrorKind::Parse,
        EmbeddingError::Io(_) => ErrorKind::Io,
        _ => ErrorKind::Provider,
    }
}

fn translation_kind(e: &TranslationError) -> ErrorKind {
    match e {
        TranslationError::LanguageMismatch { .. } => ErrorKind::Mismatch,
        TranslationError::FileFormat { .. } => ErrorKind::Parse,
        TranslationError::Corpus(c) => corpus_kind(c),
        TranslationError::Io(_) => ErrorKind::Io,
        _ => ErrorKind::Provider,
    }
}

fn metric_kind(e: &MetricError) -> ErrorKind {
    match e {
        MetricError::LengthMismatch(..) => ErrorKind::Mismatch,
        MetricError::InvalidThreshold(_) => ErrorKind::Config,
        MetricError::BadReport(_) => ErrorKind::Parse,
        _ => ErrorKind::Data,
    }
}

impl From<semrel_core::Error> for CliError {
    fn from(e: semrel_core::Error) -> Self {
        use semrel_core::Error as E;
        let kind = match &e {
            E::Corpus(c) => corpus_kind(c),
            E::Text(_) => ErrorKind::Config,
            E::Tfidf(_) | E::Head(_) => ErrorKind::Model,
            E::Embedding(x) => embedding_kind(x),
            E::Translation(x) => translation_kind(x),
            E::Metric(x) => metric_kind(x),
            E::EvalUnlabeled { .. } | E::TrainUnlabeled { .. } => ErrorKind::Data,
            E::MissingEmbedder => ErrorKind::Config,
            E::FeaturizerMismatch(_) => ErrorKind::Mismatch,
        };
        let details = match &e {
            E::Translation(TranslationError::TranslationMissing { pair_id })
            | E::EvalUnlabeled { pair_id }
            | E::TrainUnlabeled { pair_id } => Some(serde_json::json!({ "pair_id": pair_id })),
            _ => None,
        };
        Self {
            kind,
            message: e.to_string(),
            details,
        }
    }
}

macro_rules! from_module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                semrel_core::Error::from(e).into()
            }
        }
    )*};
}

from_module_error!(
    CorpusError,
    EmbeddingError,
    TranslationError,
    MetricError,
    semrel_core::heads::HeadError,
    semrel_core::tfidf::TfidfError
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(ErrorKind::Io.exit_code(), 2);
        assert_eq!(ErrorKind::Config.exit_code(), 2);
        assert_eq!(ErrorKind::Provider.exit_code(), 3);
        assert_eq!(ErrorKind::Mismatch.exit_code(), 4);
    }

    #[test]
    fn provider_errors_map_to_provider_kind() {
        let e: CliError = EmbeddingError::ProviderUnreachable("down".into()).into();
        assert_eq!(e.kind, ErrorKind::Provider);
        let e: CliError = TranslationError::TranslationMissing {
            pair_id: "p9".into(),
        }
        .into();
        assert_eq!(e.kind, ErrorKind::Provider);
        let v: Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["kind"], "provider");
        assert_eq!(v["details"]["pair_id"], "p9");
    }
}
