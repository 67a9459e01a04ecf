use std::f64::consts::PI;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, check_training_data, clamp_unit, mse, HeadError, TrainReport};

/// Linear epsilon-SVR hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrParams {
    /// Half-width of the insensitive tube.
    pub epsilon: f64,
    /// Weight of the data term against the `0.5 * |w|^2` regularizer.
    pub c: f64,
    pub epochs: usize,
    /// Initial step size; decays to 0 on a half-cosine over all steps.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            c: 1.0,
            epochs: 200,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

impl SvrParams {
    fn validate(&self) -> Result<(), HeadError> {
        let bad = |m: &str| Err(HeadError::InvalidParams(m.to_string()));
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad("epsilon must be finite and >= 0");
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return bad("c must be finite and > 0");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be finite and > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    weights: Vec<f64>,
    bias: f64,
    params: SvrParams,
}

impl SvrModel {
    pub fn new(weights: Vec<f64>, bias: f64, params: SvrParams) -> Self {
        Self {
            weights,
            bias,
            params,
        }
    }

    /// Zero weights, fixed output.
    pub fn constant(dimension: usize, value: f64, params: SvrParams) -> Self {
        Self::new(vec![0.0; dimension], value, params)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn params(&self) -> &SvrParams {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_raw(&self, x: &[f64]) -> Result<f64, HeadError> {
        check_input(self.weights.len(), x)?;
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, HeadError> {
        self.predict_raw(x).map(clamp_unit)
    }

    pub(super) fn validate(&self) -> Result<(), HeadError> {
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(HeadError::CorruptModel("non-finite SVR parameter".into()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Subgradient coefficient of `max(0, |r| - eps)` with respect to `r`.
fn tube_slope(residual: f64, epsilon: f64) -> f64 {
    if residual > epsilon {
        1.0
    } else if residual < -epsilon {
        -1.0
    } else {
        0.0
    }
}

/// Primal objective `C * sum_i max(0, |w.x_i + b - y_i| - eps) + 0.5 * |w|^2`.
pub fn svr_objective<X: AsRef<[f64]>>(
    weights: &[f64],
    bias: f64,
    x: &[X],
    y: &[f64],
    epsilon: f64,
    c: f64,
) -> f64 {
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(row, t)| ((dot(weights, row.as_ref()) + bias - t).abs() - epsilon).max(0.0))
        .sum();
    c * data + 0.5 * dot(weights, weights)
}

/// Subgradient of [`svr_objective`] with respect to `(weights, bias)`.
/// Exact gradient wherever no residual sits on a tube edge.
pub fn svr_subgradient<X: AsRef<[f64]>>(
    weights: &[f64],
    bias: f64,
    x: &[X],
    y: &[f64],
    epsilon: f64,
    c: f64,
) -> (Vec<f64>, f64) {
    let mut gw = weights.to_vec();
    let mut gb = 0.0;
    for (row, t) in x.iter().zip(y) {
        let row = row.as_ref();
        let s = tube_slope(dot(weights, row) + bias - t, epsilon);
        if s != 0.0 {
            for (g, xi) in gw.iter_mut().zip(row) {
                *g += c * s * xi;
            }
            gb += c * s;
        }
    }
    (gw, gb)
}

/// Fits a linear epsilon-SVR by seeded stochastic subgradient descent.
///
/// Each epoch visits the samples in a fresh ChaCha8 shuffle; sample `i`
/// contributes the step `w/n + C * slope_i * x_i`. If all labels are equal the
/// constant predictor is returned and the report is flagged `degenerate`.
pub fn train_svr<X: AsRef<[f64]>>(
    x: &[X],
    y: &[f64],
    params: &SvrParams,
) -> Result<(SvrModel, TrainReport), HeadError> {
    let start = Instant::now();
    let dim = check_training_data(x, y)?;
    params.validate()?;
    if y.iter().all(|&v| v == y[0]) {
        let model = SvrModel::constant(dim, y[0], params.clone());
        let report = TrainReport {
            losses: vec![0.0],
            final_loss: 0.0,
            seconds: start.elapsed().as_secs_f64(),
            degenerate: true,
        };
        return Ok((model, report));
    }

    let n = x.len();
    let inv_n = 1.0 / n as f64;
    let total_steps = (params.epochs * n).max(1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut losses = Vec::with_capacity(params.epochs);
    let mut step = 0usize;
    let mut pred = vec![0.0; n];

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let lr = params.learning_rate * 0.5 * (1.0 + (PI * step as f64 / total_steps).cos());
            step += 1;
            let row = x[i].as_ref();
            let slope = tube_slope(dot(&w, row) + b - y[i], params.epsilon);
            let shrink = 1.0 - lr * inv_n;
            if slope == 0.0 {
                w.iter_mut().for_each(|wj| *wj *= shrink);
            } else {
                let k = lr * params.c * slope;
                for (wj, xj) in w.iter_mut().zip(row) {
                    *wj = *wj * shrink - k * xj;
                }
                b -= k;
            }
        }
        for (p, row) in pred.iter_mut().zip(x) {
            *p = dot(&w, row.as_ref()) + b;
        }
        losses.push(mse(&pred, y));
    }

    let final_loss = losses.last().copied().unwrap_or_else(|| {
        let zero = vec![b; n];
        mse(&zero, y)
    });
    let model = SvrModel::new(w, b, params.clone());
    model.validate().map_err(|_| HeadError::NonFinite("trained weights"))?;
    Ok((
        model,
        TrainReport {
            losses,
            final_loss,
            seconds: start.elapsed().as_secs_f64(),
            degenerate: false,
        },
    ))
}
