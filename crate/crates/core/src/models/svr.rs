use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ModelError, Samples};
use crate::synthetic::rng;

/// Width of the insensitive tube, in standardised units.
pub const SVR_EPSILON: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrSettings {
    pub cost: f64,
    pub epsilon: f64,
    /// Largest projected-gradient violation accepted at convergence.
    pub tolerance: f64,
    pub max_passes: usize,
}

impl SvrSettings {
    pub fn with_cost(cost: f64) -> Self {
        SvrSettings { cost, epsilon: SVR_EPSILON, tolerance: 1e-3, max_passes: 50_000 }
    }
}

/// Linear ε-insensitive support-vector regressor `w·x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub passes: usize,
}

impl SvrModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).fold(self.bias, |a, (w, v)| a + w * v)
    }
}

/// Mean ε-insensitive loss of a predictor on `data`.
pub fn insensitive_loss(model: &SvrModel, data: &Samples, epsilon: f64) -> f64 {
    (0..data.len())
        .map(|i| ((model.predict(data.row(i)) - data.y[i]).abs() - epsilon).max(0.0))
        .sum::<f64>()
        / data.len() as f64
}

/// Dual coordinate descent for
/// `min ½‖w‖² + C·Σ max(0, |yᵢ − w·xᵢ − b| − ε)`, the bias being the weight
/// of a constant feature of 1.
pub fn fit_svr(train: &Samples, settings: SvrSettings, seed: u64) -> Result<SvrModel, ModelError> {
    let c = settings.cost;
    if !(c > 0.0) || !c.is_finite() {
        return Err(ModelError::InvalidParameter(format!("cost {c} must be positive")));
    }
    if train.is_empty() {
        return Err(ModelError::TooFewRows { needed: 1, got: 0 });
    }
    let n = train.len();
    let dim = train.dim;
    let eps = settings.epsilon;
    // Augmented weights: the last entry is the bias.
    let mut w = vec![0.0; dim + 1];
    let mut beta = vec![0.0; n];
    let diag: Vec<f64> = (0..n)
        .map(|i| train.row(i).iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng(seed);

    for pass in 1..=settings.max_passes {
        order.shuffle(&mut r);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let x = train.row(i);
            let wx = x.iter().zip(&w).fold(w[dim], |a, (v, wj)| a + v * wj);
            let g = wx - train.y[i];
            let gp = g + eps;
            let gn = g - eps;
            let b = beta[i];
            let violation = if b == 0.0 {
                gn.max(-gp).max(0.0)
            } else if b >= c {
                gp.max(0.0)
            } else if b <= -c {
                (-gn).max(0.0)
            } else if b > 0.0 {
                gp.abs()
            } else {
                gn.abs()
            };
            max_violation = max_violation.max(violation);
            let h = diag[i];
            let d = if gp < h * b {
                -gp / h
            } else if gn > h * b {
                -gn / h
            } else {
                -b
            };
            let updated = (b + d).clamp(-c, c);
            let delta = updated - b;
            if delta != 0.0 {
                beta[i] = updated;
                for (wj, v) in w.iter_mut().zip(x) {
                    *wj += delta * v;
                }
                w[dim] += delta;
            }
        }
        if max_violation <= settings.tolerance {
            let bias = w.pop().expect("augmented");
            return Ok(SvrModel { weights: w, bias, passes: pass });
        }
    }
    Err(ModelError::NoConvergence { passes: settings.max_passes })
}
