//! Supervised regression heads.
//!
//! Both heads take dense feature rows and relatedness labels in [0, 1], and
//! clamp predictions back into [0, 1]. Trained models serialize to a
//! versioned JSON document (`{"version": 1, "kind": "svr" | "gbt", ...}`)
//! whose floats round-trip exactly, so a reloaded model predicts
//! bit-identically.

mod gbt;
mod svr;

pub use gbt::{train_gbt, GbtModel, GbtParams, Tree};
pub use svr::{svr_objective, svr_subgradient, train_svr, SvrModel, SvrParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeadError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid hyperparameter: {0}")]
    InvalidParams(String),
    #[error("unsupported model version {0}")]
    VersionMismatch(String),
    #[error("corrupt model: {0}")]
    CorruptModel(String),
}

/// Loss trace of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training MSE after each epoch (SVR) or boosting round (GBT).
    pub losses: Vec<f64>,
    pub final_loss: f64,
    pub seconds: f64,
    /// Set when all labels were identical and a constant predictor was
    /// returned without optimization.
    pub degenerate: bool,
}

/// Hyperparameters selecting a head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadSpec {
    Svr(SvrParams),
    Gbt(GbtParams),
}

impl HeadSpec {
    pub fn train<X: AsRef<[f64]>>(
        &self,
        x: &[X],
        y: &[f64],
    ) -> Result<(HeadModel, TrainReport), HeadError> {
        match self {
            HeadSpec::Svr(p) => train_svr(x, y, p).map(|(m, r)| (HeadModel::Svr(m), r)),
            HeadSpec::Gbt(p) => train_gbt(x, y, p).map(|(m, r)| (HeadModel::Gbt(m), r)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HeadSpec::Svr(_) => "svr",
            HeadSpec::Gbt(_) => "gbt",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            HeadSpec::Svr(p) => p.seed,
            HeadSpec::Gbt(p) => p.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            HeadSpec::Svr(p) => p.seed = seed,
            HeadSpec::Gbt(p) => p.seed = seed,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadModel {
    Svr(SvrModel),
    Gbt(GbtModel),
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    version: u32,
    #[serde(flatten)]
    model: &'a HeadModel,
}

impl HeadModel {
    pub fn dimension(&self) -> usize {
        match self {
            HeadModel::Svr(m) => m.dimension(),
            HeadModel::Gbt(m) => m.dimension(),
        }
    }

    /// Prediction clamped to [0, 1].
    pub fn predict(&self, x: &[f64]) -> Result<f64, HeadError> {
        match self {
            HeadModel::Svr(m) => m.predict(x),
            HeadModel::Gbt(m) => m.predict(x),
        }
    }

    pub fn save(&self) -> Vec<u8> {
        serde_json::to_vec(&ModelFileRef {
            version: MODEL_VERSION,
            model: self,
        })
        .expect("model serializes")
    }

    pub fn load(bytes: &[u8]) -> Result<Self, HeadError> {
        let corrupt = |e: serde_json::Error| HeadError::CorruptModel(e.to_string());
        let mut value: serde_json::Value = serde_json::from_slice(bytes).map_err(corrupt)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| HeadError::CorruptModel("not a JSON object".into()))?;
        match obj.remove("version") {
            Some(v) if v.as_u64() == Some(u64::from(MODEL_VERSION)) => {}
            Some(v) => return Err(HeadError::VersionMismatch(v.to_string())),
            None => return Err(HeadError::CorruptModel("missing version".into())),
        }
        let model: HeadModel = serde_json::from_value(value).map_err(corrupt)?;
        match &model {
            HeadModel::Svr(m) => m.validate()?,
            HeadModel::Gbt(m) => m.validate()?,
        }
        Ok(model)
    }
}

/// Shared checks for training inputs; returns the feature dimension.
fn check_training_data<X: AsRef<[f64]>>(x: &[X], y: &[f64]) -> Result<usize, HeadError> {
    if x.len() != y.len() {
        return Err(HeadError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(HeadError::TooFewSamples(x.len()));
    }
    let dim = x[0].as_ref().len();
    for row in x {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(HeadError::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(HeadError::NonFinite("features"));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(HeadError::NonFinite("labels"));
    }
    Ok(dim)
}

fn check_input(expected: usize, x: &[f64]) -> Result<(), HeadError> {
    if x.len() != expected {
        return Err(HeadError::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

/// Clamp to the relatedness codomain; NaN maps to 0.
fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}
