//! Experiment configuration: a TOML document, flag overrides on top, and a
//! fully explicit resolved form that is written next to every run's outputs.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use semrel_core::corpus::{CsvFormat, LanguageCode};
use semrel_core::embeddings::{fetch_health, EmbeddingProvider, FileProvider, HttpProvider};
use semrel_core::heads::HeadSpec;
use semrel_core::metrics::{Track, DEFAULT_THRESHOLD};
use semrel_core::pipeline::FeaturizerSpec;
use semrel_core::textprep::TokenizerConfig;
use semrel_core::tfidf::{DEFAULT_PROJECTION_DIM, DEFAULT_PROJECTION_SEED};
use semrel_core::translation::{HttpTranslator, IdentityProvider, TableProvider, TranslationProvider};

use crate::error::{CliError, CliResult};

pub const PROVIDER_URL_ENV: &str = "SEMREL_PROVIDER_URL";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

/// A 64-bit seed. TOML integers are signed, so values above `i64::MAX` are
/// written as decimal strings; hex strings (`"0x5EED"`) are accepted too.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed(pub u64);

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(self.0) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&self.0.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct SeedVisitor;

        impl Visitor<'_> for SeedVisitor {
            type Value = Seed;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative 64-bit integer or integer string")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Seed, E> {
                u64::try_from(v).map(Seed).map_err(|_| E::custom("seed must be non-negative"))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Seed, E> {
                Ok(Seed(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Seed, E> {
                parse_seed(v).map_err(E::custom)
            }
        }

        d.deserialize_any(SeedVisitor)
    }
}

pub fn parse_seed(s: &str) -> Result<Seed, String> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map(Seed).map_err(|e| format!("bad seed {s:?}: {e}"))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track: Option<Track>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<Seed>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub featurizer: FeaturizerConfig,
    /// Head hyperparameters with a `kind` key; the seed comes from the
    /// top level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head: Option<toml::Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedder: Option<EmbedderConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub translator: Option<TranslatorConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Language of the evaluation data, and of the training data outside
    /// the cross-lingual track.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub language: Option<LanguageCode>,
    /// Language of the training data in the cross-lingual track.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_language: Option<LanguageCode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<PathBuf>,
    /// `auto`, `text3` or `cols4`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizerConfig {
    /// `tfidf` or `embed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection_seed: Option<Seed>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_df: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokenizer: Option<TokenizerConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    /// `file` or `http`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatorConfig {
    /// `identity`, `table:<file>` or `http:<url>` (bare `http` reads the URL
    /// from the environment).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Write `max(0, cos)` instead of raw cosines in the unsupervised track.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp: Option<bool>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => absolute(p)?,
            _ => absolute(Path::new("."))?,
        };
        cfg.rebase(&base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        join(&mut self.output_dir);
        join(&mut self.data.train);
        join(&mut self.data.eval);
        if let Some(e) = &mut self.embedder {
            join(&mut e.path);
        }
        if let Some(t) = &mut self.translator {
            join(&mut t.cache);
            if let Some(spec) = &mut t.spec {
                if let Some(rest) = spec.strip_prefix("table:") {
                    let p = Path::new(rest);
                    if p.is_relative() {
                        *spec = format!("table:{}", base.join(p).display());
                    }
                }
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Command-line overrides; every `Some` replaces the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub track: Option<Track>,
    pub seed: Option<Seed>,
    pub output_dir: Option<PathBuf>,
    pub language: Option<LanguageCode>,
    pub source_language: Option<LanguageCode>,
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub format: Option<String>,
    pub featurizer: Option<String>,
    pub head: Option<String>,
    pub embedder_path: Option<PathBuf>,
    pub embedder_url: Option<String>,
    pub embed_model: Option<String>,
    pub embed_dimension: Option<usize>,
    pub translator: Option<String>,
    pub translation_cache: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub clamp: Option<bool>,
}

impl Overrides {
    pub fn apply(self, cfg: &mut ExperimentConfig) -> CliResult<()> {
        fn set<T>(slot: &mut Option<T>, v: Option<T>) {
            if v.is_some() {
                *slot = v;
            }
        }
        let abs = |p: Option<PathBuf>| p.map(|p| absolute(&p)).transpose();
        set(&mut cfg.track, self.track);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.output_dir, abs(self.output_dir)?);
        set(&mut cfg.data.language, self.language);
        set(&mut cfg.data.source_language, self.source_language);
        set(&mut cfg.data.train, abs(self.train)?);
        set(&mut cfg.data.eval, abs(self.eval)?);
        set(&mut cfg.data.format, self.format);
        set(&mut cfg.featurizer.kind, self.featurizer);
        if let Some(kind) = self.head {
            let same = cfg
                .head
                .as_ref()
                .and_then(|h| h.get("kind"))
                .and_then(|k| k.as_str())
                == Some(kind.as_str());
            if !same {
                let mut t = toml::Table::new();
                t.insert("kind".into(), toml::Value::String(kind));
                cfg.head = Some(t);
            }
        }
        let embedder_path = abs(self.embedder_path)?;
        if embedder_path.is_some()
            || self.embedder_url.is_some()
            || self.embed_model.is_some()
            || self.embed_dimension.is_some()
        {
            let e = cfg.embedder.get_or_insert_with(Default::default);
            if embedder_path.is_some() {
                e.kind = Some("file".into());
                e.url = None;
            } else if self.embedder_url.is_some() {
                e.kind = Some("http".into());
                e.path = None;
            }
            set(&mut e.path, embedder_path);
            set(&mut e.url, self.embedder_url);
            set(&mut e.model, self.embed_model);
            set(&mut e.dimension, self.embed_dimension);
        }
        if self.translator.is_some() || self.translation_cache.is_some() {
            let t = cfg.translator.get_or_insert_with(Default::default);
            let spec = match self.translator {
                Some(s) => match s.strip_prefix("table:") {
                    Some(p) => Some(format!("table:{}", absolute(Path::new(p))?.display())),
                    None => Some(s),
                },
                None => None,
            };
            set(&mut t.spec, spec);
            set(&mut t.cache, abs(self.translation_cache)?);
        }
        set(&mut cfg.eval.threshold, self.threshold);
        set(&mut cfg.eval.clamp, self.clamp);
        Ok(())
    }
}

pub fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| CliError::io(p, e))
}

/// Which inputs a command needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Needs {
    pub train: bool,
    pub eval: bool,
    pub embedder: bool,
    pub translator: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TranslatorSpec {
    Identity,
    Table(PathBuf),
    Http(String),
}

/// A validated configuration with every default filled in.
pub struct Resolved {
    pub track: Track,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub language: LanguageCode,
    pub source_language: LanguageCode,
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub format: CsvFormat,
    pub featurizer: FeaturizerSpec,
    pub head: HeadSpec,
    pub embedder: Option<Box<dyn EmbeddingProvider>>,
    pub translator: Option<TranslatorSpec>,
    pub translation_cache: Option<PathBuf>,
    pub threshold: f64,
    pub clamp: bool,
    /// The explicit form that is persisted.
    pub snapshot: ExperimentConfig,
}

fn env_url() -> Option<String> {
    std::env::var(PROVIDER_URL_ENV).ok().filter(|s| !s.trim().is_empty())
}

fn require_file(path: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| CliError::config(format!("no {what} file configured")))?;
    if !p.is_file() {
        return Err(CliError::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} file not found")),
        ));
    }
    Ok(p)
}

fn resolve_head(table: Option<&toml::Table>, seed: u64) -> CliResult<(HeadSpec, toml::Table)> {
    let mut value = match table {
        Some(t) => serde_json::to_value(t).map_err(|e| CliError::config(e.to_string()))?,
        None => serde_json::json!({ "kind": "gbt" }),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::config("[head] must be a table"))?;
    if obj.contains_key("seed") {
        return Err(CliError::config("set the seed at the top level, not in [head]"));
    }
    obj.insert("seed".into(), seed.into());
    let spec: HeadSpec =
        serde_json::from_value(value).map_err(|e| CliError::config(format!("[head]: {e}")))?;
    let mut explicit = serde_json::to_value(&spec).expect("head serializes");
    explicit.as_object_mut().expect("object").remove("seed");
    let table = toml::Table::try_from(explicit).map_err(|e| CliError::config(e.to_string()))?;
    Ok((spec, table))
}

fn resolve_embedder(cfg: &mut EmbedderConfig) -> CliResult<Box<dyn EmbeddingProvider>> {
    let model = cfg
        .model
        .clone()
        .ok_or_else(|| CliError::config("[embedder] needs a model name"))?;
    let kind = cfg
        .kind
        .clone()
        .unwrap_or_else(|| if cfg.path.is_some() { "file" } else { "http" }.to_string());
    cfg.kind = Some(kind.clone());
    match kind.as_str() {
        "file" => {
            let path = require_file(&cfg.path, "embedding cache")?;
            let provider = FileProvider::open(&path, &model, cfg.dimension)?;
            cfg.dimension = Some(provider.dimension());
            cfg.url = None;
            cfg.path = Some(path);
            Ok(Box::new(provider))
        }
        "http" => {
            let url = cfg.url.clone().or_else(env_url).ok_or_else(|| {
                CliError::config(format!("no embedder url configured and {PROVIDER_URL_ENV} is unset"))
            })?;
            let dimension = match cfg.dimension {
                Some(d) => d,
                None => fetch_health(&url)?.dimension_of(&model).ok_or_else(|| {
                    CliError::config(format!("service at {url} does not list model {model:?}"))
                })?,
            };
            cfg.url = Some(url.clone());
            cfg.dimension = Some(dimension);
            cfg.path = None;
            Ok(Box::new(HttpProvider::new(&url, &model, dimension)))
        }
        other => Err(CliError::config(format!("unknown embedder kind {other:?} (file|http)"))),
    }
}

fn resolve_translator(spec: &str) -> CliResult<TranslatorSpec> {
    if spec == "identity" {
        return Ok(TranslatorSpec::Identity);
    }
    if let Some(path) = spec.strip_prefix("table:") {
        let p = PathBuf::from(path);
        require_file(&Some(p.clone()), "translation table")?;
        return Ok(TranslatorSpec::Table(p));
    }
    if let Some(rest) = spec.strip_prefix("http") {
        let url = match rest.strip_prefix(':') {
            Some(u) if !u.is_empty() && !u.starts_with("//") => u.to_string(),
            // `http://host` given directly
            _ if rest.starts_with("://") || rest.starts_with("s://") => spec.to_string(),
            _ => env_url().ok_or_else(|| {
                CliError::config(format!("translator is http but {PROVIDER_URL_ENV} is unset"))
            })?,
        };
        return Ok(TranslatorSpec::Http(url));
    }
    Err(CliError::config(format!(
        "unknown translator {spec:?} (identity | table:<file> | http:<url>)"
    )))
}

impl TranslatorSpec {
    pub fn to_spec_string(&self) -> String {
        match self {
            TranslatorSpec::Identity => "identity".into(),
            TranslatorSpec::Table(p) => format!("table:{}", p.display()),
            TranslatorSpec::Http(u) => format!("http:{u}"),
        }
    }

    pub fn build(
        &self,
        source: &LanguageCode,
        target: &LanguageCode,
    ) -> CliResult<Box<dyn TranslationProvider>> {
        Ok(match self {
            TranslatorSpec::Identity => Box::new(IdentityProvider::new(source.clone(), target.clone())),
            TranslatorSpec::Table(p) => Box::new(TableProvider::open(p, source.clone(), target.clone())?),
            TranslatorSpec::Http(u) => Box::new(HttpTranslator::new(u, source.clone(), target.clone())),
        })
    }
}

/// Fills defaults, validates and checks that needed inputs exist.
pub fn resolve(mut cfg: ExperimentConfig, needs: Needs) -> CliResult<Resolved> {
    let track = *cfg.track.get_or_insert(Track::A);
    let seed = cfg
        .seed
        .ok_or_else(|| CliError::config("no seed configured; every run needs an explicit seed"))?
        .0;
    let output_dir = absolute(cfg.output_dir.get_or_insert_with(|| PathBuf::from("semrel-out")))?;
    cfg.output_dir = Some(output_dir.clone());
    let language = cfg.data.language.get_or_insert(LanguageCode::Eng).clone();
    let source_language = match track {
        Track::C => cfg.data.source_language.get_or_insert(language.clone()).clone(),
        _ => {
            if cfg.data.source_language.as_ref().is_some_and(|s| *s != language) {
                return Err(CliError::config(
                    "source_language differs from language outside the cross-lingual track",
                ));
            }
            cfg.data.source_language = None;
            language.clone()
        }
    };
    let format: CsvFormat = cfg
        .data
        .format
        .get_or_insert_with(|| "auto".into())
        .parse()
        .map_err(|e: String| CliError::config(e))?;
    let train = if needs.train {
        Some(require_file(&cfg.data.train, "training")?)
    } else {
        cfg.data.train.clone()
    };
    let eval = if needs.eval {
        Some(require_file(&cfg.data.eval, "evaluation")?)
    } else {
        cfg.data.eval.clone()
    };

    let featurizer = match cfg.featurizer.kind.get_or_insert_with(|| "tfidf".into()).as_str() {
        "tfidf" => {
            let f = &mut cfg.featurizer;
            let tokenizer = f.tokenizer.get_or_insert_with(TokenizerConfig::default).clone();
            tokenizer
                .validate()
                .map_err(|e| CliError::config(format!("[featurizer.tokenizer]: {e}")))?;
            let dimension = *f.dimension.get_or_insert(DEFAULT_PROJECTION_DIM);
            let proj_seed = f.projection_seed.get_or_insert(Seed(DEFAULT_PROJECTION_SEED)).0;
            let min_df = *f.min_df.get_or_insert(1);
            if dimension == 0 || min_df == 0 {
                return Err(CliError::config("[featurizer] dimension and min_df must be positive"));
            }
            FeaturizerSpec::Tfidf {
                tokenizer,
                dimension,
                seed: proj_seed,
                min_df,
            }
        }
        "embed" => {
            cfg.featurizer = FeaturizerConfig {
                kind: Some("embed".into()),
                ..Default::default()
            };
            FeaturizerSpec::Embedding
        }
        other => {
            return Err(CliError::config(format!(
                "unknown featurizer {other:?} (tfidf|embed)"
            )))
        }
    };

    let (head, head_table) = resolve_head(cfg.head.as_ref(), seed)?;
    cfg.head = Some(head_table);

    let wants_embedder = needs.embedder
        || track == Track::B
        || (matches!(featurizer, FeaturizerSpec::Embedding) && (needs.train || needs.eval));
    let embedder = match (&mut cfg.embedder, wants_embedder) {
        (Some(e), true) => Some(resolve_embedder(e)?),
        (None, true) => {
            return Err(CliError::config("this run needs an [embedder] section"));
        }
        (_, false) => None,
    };

    let (translator, translation_cache) = match (&mut cfg.translator, needs.translator) {
        (Some(t), true) => {
            let spec = resolve_translator(t.spec.as_deref().unwrap_or("identity"))?;
            t.spec = Some(spec.to_spec_string());
            (Some(spec), t.cache.clone())
        }
        (None, true) => (Some(TranslatorSpec::Identity), None),
        (t, false) => (None, t.as_ref().and_then(|t| t.cache.clone())),
    };
    if needs.translator && cfg.translator.is_none() {
        cfg.translator = Some(TranslatorConfig {
            spec: Some("identity".into()),
            cache: None,
        });
    }

    let threshold = *cfg.eval.threshold.get_or_insert(DEFAULT_THRESHOLD);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::config(format!("threshold {threshold} must lie in (0, 1)")));
    }
    let clamp = *cfg.eval.clamp.get_or_insert(false);

    Ok(Resolved {
        track,
        seed,
        output_dir,
        language,
        source_language,
        train,
        eval,
        format,
        featurizer,
        head,
        embedder,
        translator,
        translation_cache,
        threshold,
        clamp,
        snapshot: cfg,
    })
}
