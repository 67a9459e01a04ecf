//! Translate-then-train: the labeled training set is machine-translated into
//! the evaluation language, then a supervised pipeline is fitted on the
//! translation alone and applied to the evaluation split as-is.

use crate::corpus::DatasetSplit;
use crate::embeddings::EmbeddingProvider;
use crate::heads::{HeadSpec, TrainReport};
use crate::metrics::{evaluate, EvalReport, Track};
use crate::pipeline::{train_supervised, FeaturizerSpec, SupervisedPipeline};
use crate::translation::{translate_split, TranslatedDataset, TranslationCache, TranslationProvider};
use crate::{Error, Result};

/// Everything a cross-lingual run produces.
#[derive(Debug, Clone)]
pub struct TrackCOutput {
    pub translated: TranslatedDataset,
    pub pipeline: SupervisedPipeline,
    pub train_report: TrainReport,
    /// Row-aligned with the evaluation split.
    pub predictions: Vec<f64>,
    pub report: Option<EvalReport>,
}

/// Optional pieces of a cross-lingual run.
#[derive(Default)]
pub struct TrackCOptions<'a> {
    pub embedder: Option<&'a dyn EmbeddingProvider>,
    pub cache: Option<&'a mut TranslationCache>,
    /// Binarization threshold; `Some` requests an evaluation report.
    pub report_threshold: Option<f64>,
}

pub fn run_track_c(
    train_source: &DatasetSplit,
    eval_target: &DatasetSplit,
    translator: &dyn TranslationProvider,
    featurizer: &FeaturizerSpec,
    head: &HeadSpec,
    options: TrackCOptions<'_>,
) -> Result<TrackCOutput> {
    let TrackCOptions {
        embedder,
        cache,
        report_threshold,
    } = options;
    // Fail before any translation or training work.
    let gold = match report_threshold {
        Some(_) => Some(eval_target.gold_scores().map_err(|id| Error::EvalUnlabeled {
            pair_id: id.to_string(),
        })?),
        None => None,
    };
    let translated = translate_split(translator, train_source, cache)?;
    let (pipeline, train_report) =
        train_supervised(&translated.translated, featurizer, head, embedder)?;
    let predictions = pipeline.predict_split(eval_target, embedder)?;
    let report = match (gold, report_threshold) {
        (Some(gold), Some(t)) => Some(evaluate(
            &gold,
            &predictions,
            t,
            eval_target.language().clone(),
            Track::C,
            &pipeline.name(),
        )?),
        _ => None,
    };
    Ok(TrackCOutput {
        translated,
        pipeline,
        train_report,
        predictions,
        report,
    })
}
