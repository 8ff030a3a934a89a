use serde::{Deserialize, Serialize};

use super::{ModelError, Samples};
use crate::linalg::least_squares;

/// Least-squares linear model in standardised space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub fit_intercept: bool,
}

impl OlsModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (b, v)| acc + b * v)
    }
}

/// Ordinary least squares; without an intercept the fit passes through the
/// origin.
pub fn fit_ols(train: &Samples, fit_intercept: bool) -> Result<OlsModel, ModelError> {
    let p = train.dim + usize::from(fit_intercept);
    if train.len() <= p {
        return Err(ModelError::TooFewRows { needed: p + 1, got: train.len() });
    }
    let mut columns = Vec::with_capacity(p);
    if fit_intercept {
        columns.push(vec![1.0; train.len()]);
    }
    for j in 0..train.dim {
        columns.push(train.column(j));
    }
    let ls = least_squares(&columns, &train.y);
    if !ls.is_full_rank() {
        return Err(ModelError::RankDeficient);
    }
    let (intercept, coefficients) = if fit_intercept {
        (ls.coefficients[0], ls.coefficients[1..].to_vec())
    } else {
        (0.0, ls.coefficients)
    };
    Ok(OlsModel { intercept, coefficients, fit_intercept })
}
