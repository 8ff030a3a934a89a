//! Baseline model families and their grid-searched training.

mod ann;
mod grid;
mod knn;
mod ols;
mod svr;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use ann::{fit_ann, AnnModel, AnnSettings, Network};
pub use grid::{fit, fold_plan, grid_search, Candidate, GridOutcome};
pub use knn::{distance_from_sum, fit_knn, minkowski_sum, nearest, triangular_average, KnnModel};
pub use ols::{fit_ols, OlsModel};
pub use svr::{fit_svr, insensitive_loss, SvrModel, SvrSettings, SVR_EPSILON};

use crate::data::{ChannelId, DataError, FeatureMatrix};
use crate::preprocess::{fit_scaling, PreprocessError, ScalingParams, SplitDataset};
use crate::time::Frequency;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("at least {needed} rows are required, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("invalid hyper-parameter: {0}")]
    InvalidParameter(String),
    #[error("training loss became non-finite")]
    NonFiniteLoss,
    #[error("solver did not converge within {passes} passes")]
    NoConvergence { passes: usize },
    #[error("every {family} grid point failed: {reasons:?}")]
    AllCandidatesFailed { family: Family, reasons: Vec<String> },
    #[error("query has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model expects feature `{0}` which the data lacks")]
    MissingFeature(ChannelId),
    #[error("model file: {0}")]
    Persist(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Model families in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "OLS")]
    Ols,
    #[serde(rename = "kNN")]
    Knn,
    #[serde(rename = "ANN")]
    Ann,
    #[serde(rename = "SVM")]
    Svm,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Ols, Family::Knn, Family::Ann, Family::Svm];

    pub fn label(self) -> &'static str {
        match self {
            Family::Ols => "OLS",
            Family::Knn => "kNN",
            Family::Ann => "ANN",
            Family::Svm => "SVM",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ols" | "linear" => Ok(Family::Ols),
            "knn" | "k-nn" => Ok(Family::Knn),
            "ann" | "nn" => Ok(Family::Ann),
            "svm" | "svr" => Ok(Family::Svm),
            _ => Err(format!("unknown model family `{s}` (expected OLS, kNN, ANN or SVM)")),
        }
    }
}

/// One grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum HyperParams {
    #[serde(rename = "OLS")]
    Ols { intercept: bool },
    #[serde(rename = "kNN")]
    Knn { k: usize, order: u32 },
    #[serde(rename = "ANN")]
    Ann { hidden: usize, decay: f64, max_iter: usize, threshold: f64 },
    #[serde(rename = "SVM")]
    Svm { cost: f64, epsilon: f64 },
}

impl HyperParams {
    pub fn family(&self) -> Family {
        match self {
            HyperParams::Ols { .. } => Family::Ols,
            HyperParams::Knn { .. } => Family::Knn,
            HyperParams::Ann { .. } => Family::Ann,
            HyperParams::Svm { .. } => Family::Svm,
        }
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperParams::Ols { intercept } => write!(f, "intercept={intercept}"),
            HyperParams::Knn { k, order } => write!(f, "k={k} distance={order} kernel=triangular"),
            HyperParams::Ann { hidden, decay, max_iter, threshold } => {
                write!(f, "size={hidden} decay={decay} it_max={max_iter} threshold={threshold}")
            }
            HyperParams::Svm { cost, epsilon } => write!(f, "kernel=linear c={cost} epsilon={epsilon}"),
        }
    }
}

/// Hyper-parameter values searched per family. Defaults reproduce the
/// published grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub ols_intercept: Vec<bool>,
    pub knn_k: Vec<usize>,
    pub knn_order: Vec<u32>,
    pub ann_hidden: Vec<usize>,
    pub ann_decay: Vec<f64>,
    pub ann_max_iter: usize,
    pub ann_threshold: f64,
    pub svm_cost: Vec<f64>,
    pub svm_epsilon: f64,
    pub folds: usize,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            ols_intercept: vec![true, false],
            knn_k: (1..=10).collect(),
            knn_order: (1..=5).collect(),
            ann_hidden: (1..=10).collect(),
            ann_decay: vec![0.001, 0.01, 0.1, 0.5],
            ann_max_iter: 1000,
            ann_threshold: 0.01,
            svm_cost: vec![0.25, 0.5, 1.0],
            svm_epsilon: SVR_EPSILON,
            folds: 10,
        }
    }
}

impl HyperGrid {
    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let grid: HyperGrid = toml::from_str(text).map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let empty = [
            ("ols_intercept", self.ols_intercept.is_empty()),
            ("knn_k", self.knn_k.is_empty()),
            ("knn_order", self.knn_order.is_empty()),
            ("ann_hidden", self.ann_hidden.is_empty()),
            ("ann_decay", self.ann_decay.is_empty()),
            ("svm_cost", self.svm_cost.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(ModelError::InvalidParameter(format!("grid `{name}` is empty")));
        }
        if self.folds < 2 {
            return Err(ModelError::InvalidParameter("at least 2 folds are required".into()));
        }
        Ok(())
    }

    /// Grid points for `family`, simplest first: no intercept before
    /// intercept, fewer neighbours, fewer hidden units and larger decay,
    /// smaller cost.
    pub fn candidates(&self, family: Family) -> Vec<HyperParams> {
        match family {
            Family::Ols => {
                let mut v = self.ols_intercept.clone();
                v.sort_unstable();
                v.dedup();
                v.into_iter().map(|intercept| HyperParams::Ols { intercept }).collect()
            }
            Family::Knn => {
                let mut ks = self.knn_k.clone();
                ks.sort_unstable();
                ks.dedup();
                let mut orders = self.knn_order.clone();
                orders.sort_unstable();
                orders.dedup();
                ks.iter()
                    .flat_map(|&k| orders.iter().map(move |&order| HyperParams::Knn { k, order }))
                    .collect()
            }
            Family::Ann => {
                let mut hidden = self.ann_hidden.clone();
                hidden.sort_unstable();
                hidden.dedup();
                let mut decay = self.ann_decay.clone();
                decay.sort_by(|a, b| b.total_cmp(a));
                decay.dedup();
                hidden
                    .iter()
                    .flat_map(|&h| {
                        decay.iter().map(move |&d| HyperParams::Ann {
                            hidden: h,
                            decay: d,
                            max_iter: self.ann_max_iter,
                            threshold: self.ann_threshold,
                        })
                    })
                    .collect()
            }
            Family::Svm => {
                let mut cost = self.svm_cost.clone();
                cost.sort_by(f64::total_cmp);
                cost.dedup();
                cost.into_iter()
                    .map(|c| HyperParams::Svm { cost: c, epsilon: self.svm_epsilon })
                    .collect()
            }
        }
    }
}

/// Dense row-major design matrix with targets, in standardised units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Samples {
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self, ModelError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != y.len() {
            return Err(ModelError::DimensionMismatch { expected: y.len(), got: rows.len() });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(ModelError::DimensionMismatch { expected: dim, got: r.len() });
        }
        Ok(Samples { dim, x: rows.concat(), y })
    }

    /// Predictors and dependent of a complete matrix.
    pub fn from_matrix(matrix: &FeatureMatrix) -> Result<Self, ModelError> {
        let rows = matrix.dense_rows()?;
        let dim = matrix.n_features();
        Ok(Samples { dim, x: rows.concat(), y: matrix.dependent().to_vec() })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.x[i * self.dim + j]).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Samples {
        let mut x = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            x.extend_from_slice(self.row(r));
        }
        Samples { dim: self.dim, x, y: rows.iter().map(|&r| self.y[r]).collect() }
    }
}

/// Fitted state of any family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Fitted {
    Ols(OlsModel),
    Knn(KnnModel),
    Ann(AnnModel),
    Svm(SvrModel),
}

impl Fitted {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Fitted::Ols(m) => m.predict(x),
            Fitted::Knn(m) => m.predict(x),
            Fitted::Ann(m) => m.predict(x),
            Fitted::Svm(m) => m.predict(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub id: ChannelId,
    pub min: f64,
    pub max: f64,
}

/// Row count and SHA-256 of the training data a model was fitted on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub rows: usize,
    pub sha256: String,
}

impl Fingerprint {
    pub fn of(matrix: &FeatureMatrix) -> Self {
        let mut h = Sha256::new();
        for id in matrix.feature_ids().iter().chain(std::iter::once(matrix.dependent_id())) {
            h.update(id.as_str().as_bytes());
            h.update([0]);
        }
        for (row, ts) in matrix.timestamps().iter().enumerate() {
            h.update(ts.timestamp().to_le_bytes());
            for j in 0..matrix.n_features() {
                let v = matrix.feature_at(j)[row].map_or(u64::MAX, f64::to_bits);
                h.update(v.to_le_bytes());
            }
            h.update(matrix.dependent()[row].to_bits().to_le_bytes());
        }
        Fingerprint { rows: matrix.n_rows(), sha256: hex::encode(h.finalize()) }
    }
}

/// A grid-searched model for one (family, frequency), self-contained for
/// prediction in original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: Family,
    pub frequency: Frequency,
    pub params: HyperParams,
    pub fitted: Fitted,
    pub scaling: ScalingParams,
    pub features: Vec<ChannelId>,
    pub dependent: ChannelId,
    /// Mean validation RMSE across folds, standardised units.
    pub cv_score: f64,
    /// Training ranges in original units, for range gating.
    pub feature_ranges: Vec<FeatureRange>,
    pub fingerprint: Fingerprint,
    pub candidates: Vec<Candidate>,
}

impl TrainedModel {
    /// Predictions in original units for every row of `matrix`, which must
    /// hold the model's features without missing cells.
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        let mut columns = Vec::with_capacity(self.features.len());
        for id in &self.features {
            let raw = matrix
                .feature(id)
                .ok_or_else(|| ModelError::MissingFeature(id.clone()))?;
            let c = self.scaling.get(id)?;
            let scaled = raw
                .iter()
                .map(|v| v.map(|x| (x - c.mean) / c.std).ok_or_else(|| DataError::MissingValues(id.clone())))
                .collect::<Result<Vec<f64>, _>>()?;
            columns.push(scaled);
        }
        let mut row = vec![0.0; columns.len()];
        let standardised: Vec<f64> = (0..matrix.n_rows())
            .map(|r| {
                for (slot, col) in row.iter_mut().zip(&columns) {
                    *slot = col[r];
                }
                self.fitted.predict(&row)
            })
            .collect();
        Ok(self.scaling.inverse_transform(&standardised, &self.dependent)?)
    }

    pub fn file_name(&self) -> String {
        format!("{}-{}.json", self.frequency.label(), self.family.label())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string_pretty(self).map_err(|e| ModelError::Persist(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Persist(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?).map_err(|e| ModelError::Persist(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Persist(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Fit scaling on a training matrix, standardise it and grid-search one family.
pub fn train_model(
    train: &FeatureMatrix,
    frequency: Frequency,
    family: Family,
    grid: &HyperGrid,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    let scaling = fit_scaling(train)?;
    train_with_scaling(train, &scaling, frequency, family, grid, seed)
}

fn train_with_scaling(
    train: &FeatureMatrix,
    scaling: &ScalingParams,
    frequency: Frequency,
    family: Family,
    grid: &HyperGrid,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    let samples = Samples::from_matrix(&scaling.transform(train)?)?;
    let outcome = grid_search(&samples, family, grid, seed)?;
    let mut feature_ranges = Vec::with_capacity(train.n_features());
    for id in train.feature_ids() {
        let values = train.dense_feature(id)?;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        feature_ranges.push(FeatureRange { id: id.clone(), min, max });
    }
    Ok(TrainedModel {
        family,
        frequency,
        params: outcome.params,
        fitted: outcome.fitted,
        scaling: scaling.clone(),
        features: train.feature_ids().to_vec(),
        dependent: train.dependent_id().clone(),
        cv_score: outcome.cv_rmse,
        feature_ranges,
        fingerprint: Fingerprint::of(train),
        candidates: outcome.candidates,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingFailure {
    pub frequency: Frequency,
    pub family: Family,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub models: Vec<TrainedModel>,
    pub failures: Vec<TrainingFailure>,
}

/// One model per (frequency, family); a failing pair is reported without
/// stopping the others.
pub fn train_all(
    datasets: &[(Frequency, SplitDataset)],
    families: &[Family],
    grid: &HyperGrid,
) -> TrainOutcome {
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for (frequency, split) in datasets {
        let scaling = match fit_scaling(&split.train) {
            Ok(s) => s,
            Err(e) => {
                for &family in families {
                    failures.push(TrainingFailure { frequency: *frequency, family, message: e.to_string() });
                }
                continue;
            }
        };
        for &family in families {
            match train_with_scaling(&split.train, &scaling, *frequency, family, grid, split.seed) {
                Ok(m) => models.push(m),
                Err(e) => failures.push(TrainingFailure { frequency: *frequency, family, message: e.to_string() }),
            }
        }
    }
    TrainOutcome { models, failures }
}
