use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use semrel_core::corpus::{
    parse_predictions, parse_semrel_csv_as, split_summary, write_predictions, write_semrel_csv,
    CsvFormat, DatasetSplit, LanguageCode, Split,
};
use semrel_core::crosslingual::{run_track_c, TrackCOptions};
use semrel_core::embeddings::{
    fetch_health, score_pairs_unsupervised, EmbeddingCache, EmbeddingProvider, HttpProvider,
};
use semrel_core::heads::{HeadModel, TrainReport};
use semrel_core::metrics::{evaluate, parse_report_json, render_report, ReportFormat, Track};
use semrel_core::pipeline::{train_supervised, Featurizer, SupervisedPipeline};
use semrel_core::translation::TranslationCache;

use crate::config::{resolve, ExperimentConfig, Needs, Resolved, RESOLVED_CONFIG_FILE};
use crate::error::{CliError, CliResult, ErrorKind};

pub const MODEL_FILE: &str = "model.json";
pub const FEATURIZER_FILE: &str = "featurizer.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TRANSLATED_FILE: &str = "translated_train.csv";
pub const PROVENANCE_FILE: &str = "translation_provenance.json";

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_split(path: &Path, language: &LanguageCode, split: Split, format: CsvFormat) -> CliResult<DatasetSplit> {
    let bytes = read_bytes(path)?;
    parse_semrel_csv_as(&bytes, language.clone(), split, format).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn write_snapshot(r: &Resolved) -> CliResult<PathBuf> {
    let path = r.output_dir.join(RESOLVED_CONFIG_FILE);
    write_file(&path, r.snapshot.to_toml().as_bytes())?;
    Ok(path)
}

fn write_pipeline(dir: &Path, pipe: &SupervisedPipeline, report: &TrainReport) -> CliResult<()> {
    write_file(&dir.join(MODEL_FILE), &pipe.head.save())?;
    write_file(&dir.join(FEATURIZER_FILE), &pipe.featurizer.to_json())?;
    let mut report = serde_json::to_vec_pretty(report).expect("report serializes");
    report.push(b'\n');
    write_file(&dir.join(TRAIN_REPORT_FILE), &report)
}

fn load_pipeline(dir: &Path) -> CliResult<SupervisedPipeline> {
    let head = HeadModel::load(&read_bytes(&dir.join(MODEL_FILE))?)?;
    let featurizer = Featurizer::from_json(&read_bytes(&dir.join(FEATURIZER_FILE))?)?;
    if head.dimension() != featurizer.feature_dimension() {
        return Err(CliError::new(
            ErrorKind::Model,
            format!(
                "model expects {} features but the featurizer produces {}",
                head.dimension(),
                featurizer.feature_dimension()
            ),
        ));
    }
    Ok(SupervisedPipeline { featurizer, head })
}

fn embedder(r: &Resolved) -> Option<&dyn EmbeddingProvider> {
    r.embedder.as_deref()
}

pub fn train(cfg: ExperimentConfig) -> CliResult<Value> {
    let r = resolve(
        cfg,
        Needs {
            train: true,
            ..Needs::default()
        },
    )?;
    match r.track {
        Track::A => {}
        Track::B => return Err(CliError::config("track B has no training step; use `score`")),
        Track::C => return Err(CliError::config("track C trains through `xlingual`")),
    }
    let path = r.train.as_deref().expect("train path resolved");
    let split = read_split(path, &r.language, Split::Train, r.format)?;
    let (pipe, report) = train_supervised(&split, &r.featurizer, &r.head, embedder(&r))?;
    write_pipeline(&r.output_dir, &pipe, &report)?;
    let config = write_snapshot(&r)?;
    Ok(json!({
        "command": "train",
        "seed": r.seed,
        "model": pipe.name(),
        "pairs": split.len(),
        "final_loss": report.final_loss,
        "degenerate": report.degenerate,
        "output_dir": r.output_dir,
        "resolved_config": config,
    }))
}

pub fn score(cfg: ExperimentConfig, predictions: Option<PathBuf>) -> CliResult<Value> {
    let r = resolve(
        cfg,
        Needs {
            eval: true,
            ..Needs::default()
        },
    )?;
    let path = r.eval.as_deref().expect("eval path resolved");
    let split = read_split(path, &r.language, Split::Dev, r.format)?;
    let (scores, model) = match r.track {
        Track::B => {
            let provider = embedder(&r).expect("track B resolves an embedder");
            let s = score_pairs_unsupervised(provider, &split)?;
            let scores = if r.clamp { s.clamped() } else { s.raw };
            (scores, format!("cosine:{}", provider.model_name()))
        }
        Track::A | Track::C => {
            let pipe = load_pipeline(&r.output_dir)?;
            if matches!(pipe.featurizer, Featurizer::Embedding { .. }) && r.embedder.is_none() {
                return Err(semrel_core::Error::MissingEmbedder.into());
            }
            (pipe.predict_split(&split, embedder(&r))?, pipe.name())
        }
    };
    let out = predictions.unwrap_or_else(|| r.output_dir.join(PREDICTIONS_FILE));
    write_file(&out, &write_predictions(&split, &scores)?)?;
    let config = write_snapshot(&r)?;
    Ok(json!({
        "command": "score",
        "track": r.track,
        "seed": r.seed,
        "model": model,
        "pairs": split.len(),
        "predictions": out,
        "resolved_config": config,
    }))
}

pub fn xlingual(mut cfg: ExperimentConfig) -> CliResult<Value> {
    match cfg.track {
        None | Some(Track::C) => cfg.track = Some(Track::C),
        Some(t) => {
            return Err(CliError::config(format!(
                "xlingual runs track C, but the config says track {t}"
            )))
        }
    }
    let r = resolve(
        cfg,
        Needs {
            train: true,
            eval: true,
            translator: true,
            ..Needs::default()
        },
    )?;
    let train = read_split(r.train.as_deref().expect("train"), &r.source_language, Split::Train, r.format)?;
    let eval = read_split(r.eval.as_deref().expect("eval"), &r.language, Split::Dev, r.format)?;
    let translator = r
        .translator
        .as_ref()
        .expect("translator resolved")
        .build(&r.source_language, &r.language)?;
    let mut cache = match &r.translation_cache {
        Some(p) => Some(TranslationCache::open(p)?),
        None => None,
    };
    let out = run_track_c(
        &train,
        &eval,
        translator.as_ref(),
        &r.featurizer,
        &r.head,
        TrackCOptions {
            embedder: embedder(&r),
            cache: cache.as_mut(),
            report_threshold: eval.is_labeled().then_some(r.threshold),
        },
    )?;

    let dir = &r.output_dir;
    write_file(&dir.join(TRANSLATED_FILE), &write_semrel_csv(&out.translated.translated)?)?;
    let mut provenance = serde_json::to_vec_pretty(&json!({
        "provider": translator.id(),
        "source_language": r.source_language,
        "target_language": r.language,
        "pairs": out.translated.provenance,
    }))
    .expect("provenance serializes");
    provenance.push(b'\n');
    write_file(&dir.join(PROVENANCE_FILE), &provenance)?;
    write_pipeline(dir, &out.pipeline, &out.train_report)?;
    write_file(&dir.join(PREDICTIONS_FILE), &write_predictions(&eval, &out.predictions)?)?;
    if let Some(report) = &out.report {
        write_file(
            &dir.join(REPORT_FILE),
            &render_report(std::slice::from_ref(report), ReportFormat::Json),
        )?;
    }
    if let (Some(path), Some(cache)) = (&r.translation_cache, &cache) {
        let mut buf = Vec::new();
        cache.write(&mut buf)?;
        write_file(path, &buf)?;
    }
    let config = write_snapshot(&r)?;
    Ok(json!({
        "command": "xlingual",
        "seed": r.seed,
        "model": out.pipeline.name(),
        "translator": translator.id(),
        "train_pairs": train.len(),
        "eval_pairs": eval.len(),
        "spearman": out.report.as_ref().map(|r| r.spearman),
        "output_dir": dir,
        "resolved_config": config,
    }))
}

pub struct EvalArgs {
    pub gold: PathBuf,
    pub predictions: PathBuf,
    pub threshold: f64,
    pub language: LanguageCode,
    pub format: CsvFormat,
    pub track: Track,
    pub model: String,
    pub report: Option<PathBuf>,
    pub json: bool,
}

/// Joins gold and predicted scores on pair id and scores them. Returns the
/// text to print.
pub fn eval(args: EvalArgs) -> CliResult<Vec<u8>> {
    let gold = read_split(&args.gold, &args.language, Split::Dev, args.format)?;
    let preds = parse_predictions(&read_bytes(&args.predictions)?).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", args.predictions.display(), err.message);
        err
    })?;
    let by_id: HashMap<&str, f64> = preds.iter().map(|p| (p.pair_id.as_str(), p.score)).collect();
    let gold_ids: BTreeSet<&str> = gold.pairs().iter().map(|p| p.pair_id.as_str()).collect();
    let missing: Vec<&str> = gold
        .pairs()
        .iter()
        .map(|p| p.pair_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    let unknown: Vec<&str> = preds
        .iter()
        .map(|p| p.pair_id.as_str())
        .filter(|id| !gold_ids.contains(id))
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        let mut listed: Vec<&str> = missing.iter().chain(&unknown).copied().collect();
        listed.sort_unstable();
        return Err(CliError::new(
            ErrorKind::Mismatch,
            format!(
                "unmatched pair ids: {} without prediction, {} without gold: {}",
                missing.len(),
                unknown.len(),
                listed.join(", ")
            ),
        )
        .with_details(json!({
            "missing_predictions": missing,
            "unknown_predictions": unknown,
        })));
    }
    let gold_scores = gold.gold_scores().map_err(|id| {
        CliError::from(semrel_core::Error::EvalUnlabeled {
            pair_id: id.to_string(),
        })
    })?;
    let pred_scores: Vec<f64> = gold.pairs().iter().map(|p| by_id[p.pair_id.as_str()]).collect();
    let report = evaluate(
        &gold_scores,
        &pred_scores,
        args.threshold,
        args.language.clone(),
        args.track,
        &args.model,
    )?;
    let reports = [report];
    if let Some(path) = &args.report {
        write_file(path, &render_report(&reports, ReportFormat::Json))?;
    }
    let format = if args.json { ReportFormat::Json } else { ReportFormat::Table };
    Ok(render_report(&reports, format))
}

/// `LANG:SPLIT:PATH`, e.g. `eng:train:data/eng_train.csv`.
pub fn parse_data_spec(s: &str) -> Result<(LanguageCode, Split, PathBuf), String> {
    let mut parts = s.splitn(3, ':');
    let (Some(lang), Some(split), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("expected LANG:SPLIT:PATH, got {s:?}"));
    };
    let lang: LanguageCode = lang.parse().map_err(|e| format!("{e:?}"))?;
    let split: Split = split.parse().map_err(|e| format!("{e:?}"))?;
    Ok((lang, split, PathBuf::from(path)))
}

pub fn report(inputs: &[PathBuf], data: &[(LanguageCode, Split, PathBuf)], format: ReportFormat) -> CliResult<Vec<u8>> {
    let mut reports = Vec::new();
    for path in inputs {
        let mut parsed = parse_report_json(&read_bytes(path)?).map_err(|e| {
            let mut err = CliError::from(e);
            err.message = format!("{}: {}", path.display(), err.message);
            err
        })?;
        reports.append(&mut parsed);
    }
    let splits = data
        .iter()
        .map(|(lang, split, path)| read_split(path, lang, *split, CsvFormat::Auto))
        .collect::<CliResult<Vec<_>>>()?;
    let counts = split_summary(&splits);
    let mut out = Vec::new();
    match format {
        ReportFormat::Json => {
            let doc = json!({
                "version": semrel_core::metrics::REPORT_VERSION,
                "reports": reports,
                "data": counts.iter().map(|c| json!({
                    "language": c.language,
                    "split": c.split.to_string(),
                    "count": c.count,
                })).collect::<Vec<_>>(),
            });
            out = serde_json::to_vec_pretty(&doc).expect("report serializes");
            out.push(b'\n');
        }
        ReportFormat::Table => {
            if !counts.is_empty() {
                let w = counts
                    .iter()
                    .map(|c| c.language.display_name().len())
                    .max()
                    .unwrap_or(0)
                    .max("Language".len());
                out.extend(format!("{:<w$}  {:<5}  {:>6}\n", "Language", "Split", "Pairs").bytes());
                for c in &counts {
                    out.extend(
                        format!("{:<w$}  {:<5}  {:>6}\n", c.language.display_name(), c.split, c.count).bytes(),
                    );
                }
                if !reports.is_empty() {
                    out.push(b'\n');
                }
            }
            if !reports.is_empty() || counts.is_empty() {
                out.extend(render_report(&reports, ReportFormat::Table));
            }
        }
    }
    Ok(out)
}

pub struct CacheExportArgs {
    pub url: String,
    pub model: String,
    pub dimension: Option<usize>,
    pub inputs: Vec<PathBuf>,
    pub language: LanguageCode,
    pub format: CsvFormat,
    pub out: PathBuf,
}

/// Embeds every distinct sentence of the inputs through a remote service
/// and merges the vectors into a cache file.
pub fn cache_export(args: CacheExportArgs) -> CliResult<Value> {
    let dimension = match args.dimension {
        Some(d) => d,
        None => fetch_health(&args.url)?
            .dimension_of(&args.model)
            .ok_or_else(|| CliError::config(format!("service does not list model {:?}", args.model)))?,
    };
    let provider = HttpProvider::new(&args.url, &args.model, dimension);
    let mut texts = BTreeSet::new();
    for path in &args.inputs {
        let split = read_split(path, &args.language, Split::Dev, args.format)?;
        for p in split.pairs() {
            texts.insert(p.sentence1.clone());
            texts.insert(p.sentence2.clone());
        }
    }
    let texts: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vectors = if texts.is_empty() {
        Vec::new()
    } else {
        provider.embed_batch(&texts)?
    };
    let mut cache = if args.out.exists() {
        EmbeddingCache::open(&args.out)?
    } else {
        EmbeddingCache::new()
    };
    for (t, v) in texts.iter().zip(vectors) {
        cache
            .insert_text(&args.model, t, v)
            .map_err(|m| CliError::new(ErrorKind::Mismatch, m))?;
    }
    let mut buf = Vec::new();
    cache.write_jsonl(&mut buf)?;
    write_file(&args.out, &buf)?;
    Ok(json!({
        "command": "cache export",
        "model": args.model,
        "texts": texts.len(),
        "records": cache.len(),
        "out": args.out,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheKind {
    Embedding,
    Translation,
}

/// Merges one cache file into another of the same kind.
pub fn cache_import(kind: CacheKind, from: &Path, into: &Path) -> CliResult<Value> {
    let mut buf = Vec::new();
    let records = match kind {
        CacheKind::Embedding => {
            let incoming = EmbeddingCache::open(from)?;
            let mut cache = if into.exists() {
                EmbeddingCache::open(into)?
            } else {
                EmbeddingCache::new()
            };
            cache
                .merge(incoming)
                .map_err(|m| CliError::new(ErrorKind::Mismatch, m))?;
            cache.write_jsonl(&mut buf)?;
            cache.len()
        }
        CacheKind::Translation => {
            if !from.is_file() {
                return Err(CliError::io(
                    from,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "cache file not found"),
                ));
            }
            let incoming = TranslationCache::open(from)?;
            let mut cache = TranslationCache::open(into)?;
            cache.merge(incoming);
            cache.write(&mut buf)?;
            cache.len()
        }
    };
    write_file(into, &buf)?;
    Ok(json!({ "command": "cache import", "records": records, "into": into }))
}
