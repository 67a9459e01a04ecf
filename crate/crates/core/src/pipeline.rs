//! Supervised scoring: a fitted featurizer in front of a regression head.

use serde::{Deserialize, Serialize};

use crate::corpus::DatasetSplit;
use crate::embeddings::{embed_pairs, EmbeddingProvider};
use crate::features::PairFeatures;
use crate::heads::{HeadModel, HeadSpec, TrainReport};
use crate::textprep::{analyze, TokenizerConfig};
use crate::tfidf::{
    pair_features, HashProjection, TfidfError, TfidfModel, DEFAULT_PROJECTION_DIM,
    DEFAULT_PROJECTION_SEED,
};
use crate::{Error, Result};

pub const FEATURIZER_VERSION: u32 = 1;

/// How pair features are produced, before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeaturizerSpec {
    Tfidf {
        tokenizer: TokenizerConfig,
        dimension: usize,
        seed: u64,
        min_df: usize,
    },
    /// Pair features over sentence embeddings from the supplied provider.
    Embedding,
}

impl FeaturizerSpec {
    pub fn tfidf_default() -> Self {
        FeaturizerSpec::Tfidf {
            tokenizer: TokenizerConfig::default(),
            dimension: DEFAULT_PROJECTION_DIM,
            seed: DEFAULT_PROJECTION_SEED,
            min_df: 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeaturizerSpec::Tfidf { .. } => "tfidf",
            FeaturizerSpec::Embedding => "embed",
        }
    }

    /// Fits on the sentences of `train` only.
    pub fn fit(
        &self,
        train: &DatasetSplit,
        embedder: Option<&dyn EmbeddingProvider>,
    ) -> Result<Featurizer> {
        match self {
            FeaturizerSpec::Tfidf {
                tokenizer,
                dimension,
                seed,
                min_df,
            } => {
                tokenizer.validate()?;
                let docs: Vec<_> = train
                    .pairs()
                    .iter()
                    .flat_map(|p| [&p.sentence1, &p.sentence2])
                    .map(|s| analyze(s, tokenizer))
                    .collect();
                let model = TfidfModel::fit_with_min_df(&docs, tokenizer.clone(), *min_df)?;
                let projection = HashProjection::new(&model, *dimension, *seed)?;
                Ok(Featurizer::Tfidf { model, projection })
            }
            FeaturizerSpec::Embedding => {
                let e = embedder.ok_or(Error::MissingEmbedder)?;
                Ok(Featurizer::Embedding {
                    model_name: e.model_name().to_string(),
                    dimension: e.dimension(),
                })
            }
        }
    }
}

/// A fitted featurizer.
#[derive(Debug, Clone, PartialEq)]
pub enum Featurizer {
    Tfidf {
        model: TfidfModel,
        projection: HashProjection,
    },
    Embedding {
        model_name: String,
        dimension: usize,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum FeaturizerFile {
    Tfidf {
        version: u32,
        projection_dimension: usize,
        projection_seed: u64,
        model: serde_json::Value,
    },
    Embedding {
        version: u32,
        model: String,
        dimension: usize,
    },
}

impl Featurizer {
    /// Width of the pair-feature rows: `2 * d + 1`.
    pub fn feature_dimension(&self) -> usize {
        let d = match self {
            Featurizer::Tfidf { projection, .. } => projection.dimension(),
            Featurizer::Embedding { dimension, .. } => *dimension,
        };
        2 * d + 1
    }

    pub fn name(&self) -> String {
        match self {
            Featurizer::Tfidf { .. } => "tfidf".to_string(),
            Featurizer::Embedding { model_name, .. } => format!("embed:{model_name}"),
        }
    }

    /// Pair features for every pair of `split`, in order.
    pub fn featurize(
        &self,
        split: &DatasetSplit,
        embedder: Option<&dyn EmbeddingProvider>,
    ) -> Result<Vec<PairFeatures>> {
        match self {
            Featurizer::Tfidf { model, projection } => {
                let config = model.config();
                Ok(split
                    .pairs()
                    .iter()
                    .map(|p| {
                        pair_features(
                            model,
                            &analyze(&p.sentence1, config),
                            &analyze(&p.sentence2, config),
                            projection,
                        )
                    })
                    .collect())
            }
            Featurizer::Embedding {
                model_name,
                dimension,
            } => {
                let e = embedder.ok_or(Error::MissingEmbedder)?;
                if e.model_name() != model_name || e.dimension() != *dimension {
                    return Err(Error::FeaturizerMismatch(format!(
                        "fitted for {model_name} (d={dimension}), provider is {} (d={})",
                        e.model_name(),
                        e.dimension()
                    )));
                }
                let (left, right) = embed_pairs(e, split)?;
                Ok(left
                    .iter()
                    .zip(&right)
                    .map(|(u, v)| PairFeatures::from_dense(u.values(), v.values()))
                    .collect())
            }
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let file = match self {
            Featurizer::Tfidf { model, projection } => FeaturizerFile::Tfidf {
                version: FEATURIZER_VERSION,
                projection_dimension: projection.dimension(),
                projection_seed: projection.seed(),
                model: serde_json::from_slice(&model.to_json()).expect("tfidf json parses"),
            },
            Featurizer::Embedding {
                model_name,
                dimension,
            } => FeaturizerFile::Embedding {
                version: FEATURIZER_VERSION,
                model: model_name.clone(),
                dimension: *dimension,
            },
        };
        let mut out = serde_json::to_vec(&file).expect("featurizer serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let corrupt = |e: serde_json::Error| TfidfError::CorruptModel(e.to_string());
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(corrupt)?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FEATURIZER_VERSION) => {}
            Some(v) => return Err(TfidfError::VersionMismatch(v.to_string()).into()),
            None => return Err(TfidfError::CorruptModel("missing version".into()).into()),
        }
        match serde_json::from_value(value).map_err(corrupt)? {
            FeaturizerFile::Tfidf {
                projection_dimension,
                projection_seed,
                model,
                ..
            } => {
                let model = TfidfModel::from_json(&serde_json::to_vec(&model).map_err(corrupt)?)?;
                let projection = HashProjection::new(&model, projection_dimension, projection_seed)?;
                Ok(Featurizer::Tfidf { model, projection })
            }
            FeaturizerFile::Embedding {
                model, dimension, ..
            } => {
                if dimension == 0 {
                    return Err(TfidfError::InvalidDimension.into());
                }
                Ok(Featurizer::Embedding {
                    model_name: model,
                    dimension,
                })
            }
        }
    }
}

/// Featurizer plus trained head.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedPipeline {
    pub featurizer: Featurizer,
    pub head: HeadModel,
}

fn head_name(head: &HeadModel) -> &'static str {
    match head {
        HeadModel::Svr(_) => "svr",
        HeadModel::Gbt(_) => "gbt",
    }
}

impl SupervisedPipeline {
    /// Scores in [0, 1], row-aligned with `split`.
    pub fn predict_split(
        &self,
        split: &DatasetSplit,
        embedder: Option<&dyn EmbeddingProvider>,
    ) -> Result<Vec<f64>> {
        self.featurizer
            .featurize(split, embedder)?
            .iter()
            .map(|f| self.head.predict(f.values()).map_err(Error::from))
            .collect()
    }

    /// Display name such as `tfidf+gbt`.
    pub fn name(&self) -> String {
        format!("{}+{}", self.featurizer.name(), head_name(&self.head))
    }
}

/// Fits the featurizer on `train`, then the head on its pair features.
pub fn train_supervised(
    train: &DatasetSplit,
    featurizer: &FeaturizerSpec,
    head: &HeadSpec,
    embedder: Option<&dyn EmbeddingProvider>,
) -> Result<(SupervisedPipeline, TrainReport)> {
    let y = train.gold_scores().map_err(|id| Error::TrainUnlabeled {
        pair_id: id.to_string(),
    })?;
    let featurizer = featurizer.fit(train, embedder)?;
    let x = featurizer.featurize(train, embedder)?;
    let rows: Vec<&[f64]> = x.iter().map(PairFeatures::values).collect();
    let (head, report) = head.train(&rows, &y)?;
    Ok((SupervisedPipeline { featurizer, head }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_semrel_csv, LanguageCode, Split};
    use crate::embeddings::FileProvider;
    use crate::heads::{GbtParams, SvrParams};

    fn fixture() -> DatasetSplit {
        parse_semrel_csv(
            "PairID,Sentence1,Sentence2,Score\n\
             p1,the cat sat,the cat sat,1.0\n\
             p2,the cat sat,a dog ran,0.1\n\
             p3,red apples fall,red apples drop,0.7\n\
             p4,birds sing loudly,fish swim quietly,0.0\n\
             p5,a dog ran,the dog ran fast,0.8\n\
             p6,cold rain today,cold rain again,0.6\n"
                .as_bytes(),
            LanguageCode::Eng,
            Split::Train,
        )
        .unwrap()
    }

    fn small_tfidf() -> FeaturizerSpec {
        FeaturizerSpec::Tfidf {
            tokenizer: TokenizerConfig::default(),
            dimension: 16,
            seed: 7,
            min_df: 1,
        }
    }

    #[test]
    fn tfidf_pipeline_trains_and_predicts_in_range() {
        let split = fixture();
        for head in [
            HeadSpec::Svr(SvrParams::default()),
            HeadSpec::Gbt(GbtParams::default()),
        ] {
            let (pipe, report) = train_supervised(&split, &small_tfidf(), &head, None).unwrap();
            assert_eq!(pipe.head.dimension(), 33);
            assert!(report.final_loss.is_finite());
            let preds = pipe.predict_split(&split, None).unwrap();
            assert_eq!(preds.len(), split.len());
            assert!(preds.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn featurizer_fits_on_training_sentences_only() {
        let split = fixture();
        let Featurizer::Tfidf { model, .. } = small_tfidf().fit(&split, None).unwrap() else {
            panic!("expected tfidf");
        };
        assert_eq!(model.corpus_size(), 2 * split.len());
        assert!(model.column("zebra").is_none());
    }

    #[test]
    fn featurizer_json_round_trip() {
        let split = fixture();
        let f = small_tfidf().fit(&split, None).unwrap();
        let back = Featurizer::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_json(), f.to_json());

        let e = Featurizer::Embedding {
            model_name: "m".into(),
            dimension: 3,
        };
        assert_eq!(Featurizer::from_json(&e.to_json()).unwrap(), e);

        let bumped = String::from_utf8(f.to_json()).unwrap().replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(
            Featurizer::from_json(bumped.as_bytes()),
            Err(Error::Tfidf(TfidfError::VersionMismatch(_)))
        ));
    }

    #[test]
    fn unlabeled_training_split_is_rejected() {
        let split = parse_semrel_csv(
            "PairID,Sentence1,Sentence2,Score\np1,a b,c d,0.5\np2,e f,g h,\n".as_bytes(),
            LanguageCode::Eng,
            Split::Train,
        )
        .unwrap();
        let err = train_supervised(&split, &small_tfidf(), &HeadSpec::Svr(SvrParams::default()), None)
            .unwrap_err();
        assert!(matches!(err, Error::TrainUnlabeled { pair_id } if pair_id == "p2"));
    }

    #[test]
    fn embedding_featurizer_uses_provider() {
        let split = fixture();
        let texts: Vec<(String, Vec<f64>)> = split
            .pairs()
            .iter()
            .flat_map(|p| [p.sentence1.clone(), p.sentence2.clone()])
            .map(|t| {
                let k = t.len() as f64;
                (t, vec![k, 1.0, (k * 0.3).sin()])
            })
            .collect();
        let provider =
            FileProvider::from_texts("fx", texts.iter().map(|(t, v)| (t.as_str(), v.clone()))).unwrap();
        let head = HeadSpec::Gbt(GbtParams::default());
        assert!(matches!(
            train_supervised(&split, &FeaturizerSpec::Embedding, &head, None),
            Err(Error::MissingEmbedder)
        ));
        let (pipe, _) =
            train_supervised(&split, &FeaturizerSpec::Embedding, &head, Some(&provider)).unwrap();
        assert_eq!(pipe.head.dimension(), 7);
        assert_eq!(pipe.name(), "embed:fx+gbt");
        let preds = pipe.predict_split(&split, Some(&provider)).unwrap();
        assert_eq!(preds.len(), split.len());

        let other = FileProvider::from_texts("other", texts.iter().map(|(t, v)| (t.as_str(), v.clone()))).unwrap();
        assert!(matches!(
            pipe.predict_split(&split, Some(&other)),
            Err(Error::FeaturizerMismatch(_))
        ));
    }
}
