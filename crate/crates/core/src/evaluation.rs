//! Held-out scoring, model selection and the performance-requirement curve.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::models::{Family, ModelError, TrainedModel};
use crate::time::Frequency;

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("actual and predicted series differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty series")]
    Empty,
    #[error("mean of the actual values is zero; the normalised metrics are undefined")]
    ZeroMean,
    #[error("no {0} test matrix for the {1} model")]
    MissingTestData(Frequency, Family),
    #[error("test matrix has spacing {got_secs} s but the model is {expected}")]
    FrequencyMismatch { expected: Frequency, got_secs: i64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check(actual: &[f64], predicted: &[f64]) -> Result<f64, EvaluationError> {
    if actual.len() != predicted.len() {
        return Err(EvaluationError::LengthMismatch(actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    if mean == 0.0 {
        return Err(EvaluationError::ZeroMean);
    }
    Ok(mean)
}

/// Root-mean-square error with denominator `n`.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, EvaluationError> {
    check(actual, predicted)?;
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// `100 · RMSE / mean(actual)`, in percent.
pub fn cv_rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, EvaluationError> {
    let mean = check(actual, predicted)?;
    Ok(100.0 * rmse(actual, predicted)? / mean)
}

/// `100 · mean(actual − predicted) / mean(actual)`, in percent. Positive
/// values mean the model under-predicts.
pub fn nmbe(actual: &[f64], predicted: &[f64]) -> Result<f64, EvaluationError> {
    let mean = check(actual, predicted)?;
    let bias: f64 = actual.iter().zip(predicted).map(|(a, p)| a - p).sum::<f64>() / actual.len() as f64;
    Ok(100.0 * bias / mean)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub family: Family,
    pub frequency: Frequency,
    pub cv_rmse_pct: f64,
    pub nmbe_pct: f64,
    /// Test-set RMSE in original units (the standard error).
    pub rmse_abs: f64,
    pub mean_actual: f64,
    pub n_test: usize,
}

/// Score a model on a held-out matrix in original units.
pub fn evaluate(model: &TrainedModel, test: &FeatureMatrix) -> Result<ModelScore, EvaluationError> {
    if test.spacing() != model.frequency.duration() {
        return Err(EvaluationError::FrequencyMismatch {
            expected: model.frequency,
            got_secs: test.spacing().num_seconds(),
        });
    }
    let predicted = model.predict(test)?;
    let actual = test.dependent();
    let mean_actual = check(actual, &predicted)?;
    Ok(ModelScore {
        family: model.family,
        frequency: model.frequency,
        cv_rmse_pct: cv_rmse(actual, &predicted)?,
        nmbe_pct: nmbe(actual, &predicted)?,
        rmse_abs: rmse(actual, &predicted)?,
        mean_actual,
        n_test: actual.len(),
    })
}

/// One score per model, each on the test matrix of its frequency.
pub fn evaluate_all(
    models: &[TrainedModel],
    tests: &[(Frequency, FeatureMatrix)],
) -> Result<Vec<ModelScore>, EvaluationError> {
    models
        .iter()
        .map(|m| {
            let test = tests
                .iter()
                .find(|(f, _)| *f == m.frequency)
                .map(|(_, t)| t)
                .ok_or(EvaluationError::MissingTestData(m.frequency, m.family))?;
            evaluate(m, test)
        })
        .collect()
}

/// Lowest CV(RMSE); ties go to the coarser frequency, then family order.
pub fn select_best(scores: &[ModelScore]) -> Option<&ModelScore> {
    scores.iter().min_by(|a, b| {
        a.cv_rmse_pct
            .total_cmp(&b.cv_rmse_pct)
            .then(b.frequency.cmp(&a.frequency))
            .then(a.family.cmp(&b.family))
    })
}

/// Score table as CSV, sorted by frequency then family.
pub fn score_table_csv(scores: &[ModelScore]) -> String {
    let mut sorted: Vec<&ModelScore> = scores.iter().collect();
    sorted.sort_by(|a, b| a.frequency.cmp(&b.frequency).then(a.family.cmp(&b.family)));
    let mut out = String::from("frequency,family,cv_rmse_pct,nmbe_pct,rmse,mean_actual,n_test\n");
    for s in sorted {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{}",
            s.frequency, s.family, s.cv_rmse_pct, s.nmbe_pct, s.rmse_abs, s.mean_actual, s.n_test
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequirementPoint {
    pub fractional_savings: f64,
    pub max_cv_rmse_pct: f64,
}

/// Largest CV(RMSE) for which savings of `F·ȳ·m` still exceed twice the
/// `t`-scaled total standard error `t·RMSE·√m`, per fractional savings `F`:
/// `CV_max = 100·F·√m / (2t)`. `n`, the baseline length, does not enter the
/// relation and is accepted for symmetry with the ASHRAE form.
pub fn required_cvrmse_curve(fractions: &[f64], t: f64, _n: usize, m: usize) -> Vec<RequirementPoint> {
    fractions
        .iter()
        .map(|&f| RequirementPoint {
            fractional_savings: f,
            max_cv_rmse_pct: 100.0 * f * (m as f64).sqrt() / (2.0 * t),
        })
        .collect()
}
