//! `semrel`: train, score and evaluate semantic relatedness models.
//!
//! Failures print one JSON object `{"kind", "message", "details"?}` to
//! stderr and exit with 2 (config or I/O), 3 (provider) or 4 (data
//! mismatch).

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use semrel_core::corpus::{CsvFormat, LanguageCode, Split};
use semrel_core::metrics::{ReportFormat, Track, DEFAULT_THRESHOLD};

use commands::{CacheExportArgs, CacheKind, EvalArgs};
use config::{parse_seed, ExperimentConfig, Overrides, Seed, PROVIDER_URL_ENV};
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "semrel", version, about = "Semantic textual relatedness experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a featurizer and regression head on a labeled split.
    Train(RunArgs),
    /// Write a prediction file for a split.
    Score {
        #[command(flatten)]
        run: RunArgs,
        /// Split to score; overrides `data.eval`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Prediction file; defaults to `<output_dir>/predictions.csv`.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Score a prediction file against gold labels.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long = "pred", alias = "predictions")]
        predictions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value = "eng")]
        language: String,
        #[arg(long, default_value = "auto")]
        format: String,
        #[arg(long, default_value = "A", value_parser = parse_track)]
        track: Track,
        /// Model name shown in the report.
        #[arg(long, default_value = "model")]
        model: String,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Translate a training split into the evaluation language, train on
    /// it, and score the evaluation split.
    Xlingual(RunArgs),
    /// Build or merge provider caches.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Combine evaluation reports and dataset counts into one table.
    Report {
        /// Report files written by `eval` or `xlingual`.
        inputs: Vec<PathBuf>,
        /// Dataset to count, as LANG:SPLIT:PATH. Repeatable.
        #[arg(long = "data", value_parser = commands::parse_data_spec)]
        data: Vec<(LanguageCode, Split, PathBuf)>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum CacheAction {
    /// Embed every sentence of the given splits through a remote service
    /// and write the vectors to a cache file.
    Export {
        #[arg(long, env = PROVIDER_URL_ENV)]
        url: String,
        #[arg(long)]
        model: String,
        /// Declared vector size; asked from the service when omitted.
        #[arg(long)]
        dimension: Option<usize>,
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "eng")]
        language: String,
        #[arg(long, default_value = "auto")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge one cache file into another.
    Import {
        #[arg(long, value_enum, default_value_t = CacheKindArg::Embedding)]
        kind: CacheKindArg,
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        into: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CacheKindArg {
    Embedding,
    Translation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Table,
    Json,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Experiment config (TOML). Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_track)]
    track: Option<Track>,
    #[arg(long, value_parser = parse_seed)]
    seed: Option<Seed>,
    #[arg(long = "out")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    source_language: Option<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    eval: Option<PathBuf>,
    /// CSV layout: auto, text3 or cols4.
    #[arg(long)]
    format: Option<String>,
    /// tfidf or embed.
    #[arg(long)]
    featurizer: Option<String>,
    /// svr or gbt.
    #[arg(long)]
    head: Option<String>,
    /// Embedding cache file (file provider).
    #[arg(long)]
    embedder_cache: Option<PathBuf>,
    /// Embedding service URL (HTTP provider).
    #[arg(long)]
    embedder_url: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// identity, table:<file> or http:<url>.
    #[arg(long)]
    translator: Option<String>,
    #[arg(long)]
    translation_cache: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Write max(0, cos) in the unsupervised track.
    #[arg(long)]
    clamp: bool,
}

fn parse_track(s: &str) -> Result<Track, String> {
    s.parse()
}

fn parse_language(s: &str) -> CliResult<LanguageCode> {
    s.parse()
        .map_err(|e| CliError::config(format!("bad language {s:?}: {e:?}")))
}

fn parse_format(s: &str) -> CliResult<CsvFormat> {
    s.parse().map_err(CliError::config)
}

impl RunArgs {
    fn into_config(self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let language = self.language.as_deref().map(parse_language).transpose()?;
        let source_language = self.source_language.as_deref().map(parse_language).transpose()?;
        Overrides {
            track: self.track,
            seed: self.seed,
            output_dir: self.output_dir,
            language,
            source_language,
            train: self.train,
            eval: self.eval,
            format: self.format,
            featurizer: self.featurizer,
            head: self.head,
            embedder_path: self.embedder_cache,
            embedder_url: self.embedder_url,
            embed_model: self.embed_model,
            embed_dimension: self.embed_dim,
            translator: self.translator,
            translation_cache: self.translation_cache,
            threshold: self.threshold,
            clamp: self.clamp.then_some(true),
        }
        .apply(&mut cfg)?;
        Ok(cfg)
    }
}

enum Output {
    Summary(Value),
    Text(Vec<u8>),
}

fn run(cli: Cli) -> CliResult<Output> {
    Ok(match cli.command {
        Command::Train(run) => Output::Summary(commands::train(run.into_config()?)?),
        Command::Score {
            run,
            input,
            predictions,
        } => {
            let mut cfg = run.into_config()?;
            if let Some(input) = input {
                cfg.data.eval = Some(config::absolute(&input)?);
            }
            let predictions = predictions.map(|p| config::absolute(&p)).transpose()?;
            Output::Summary(commands::score(cfg, predictions)?)
        }
        Command::Xlingual(run) => Output::Summary(commands::xlingual(run.into_config()?)?),
        Command::Eval {
            gold,
            predictions,
            threshold,
            language,
            format,
            track,
            model,
            report,
            json,
        } => Output::Text(commands::eval(EvalArgs {
            gold,
            predictions,
            threshold,
            language: parse_language(&language)?,
            format: parse_format(&format)?,
            track,
            model,
            report,
            json,
        })?),
        Command::Cache { action } => match action {
            CacheAction::Export {
                url,
                model,
                dimension,
                inputs,
                language,
                format,
                out,
            } => Output::Summary(commands::cache_export(CacheExportArgs {
                url,
                model,
                dimension,
                inputs,
                language: parse_language(&language)?,
                format: parse_format(&format)?,
                out,
            })?),
            CacheAction::Import { kind, from, into } => {
                let kind = match kind {
                    CacheKindArg::Embedding => CacheKind::Embedding,
                    CacheKindArg::Translation => CacheKind::Translation,
                };
                Output::Summary(commands::cache_import(kind, &from, &into)?)
            }
        },
        Command::Report {
            inputs,
            data,
            format,
            out,
        } => {
            let format = match format {
                OutputFormat::Table => ReportFormat::Table,
                OutputFormat::Json => ReportFormat::Json,
            };
            let text = commands::report(&inputs, &data, format)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
                    Output::Text(Vec::new())
                }
                None => Output::Text(text),
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(output) => {
            let mut stdout = std::io::stdout().lock();
            let _ = match output {
                Output::Summary(v) => writeln!(stdout, "{v}"),
                Output::Text(t) => stdout.write_all(&t),
            };
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
