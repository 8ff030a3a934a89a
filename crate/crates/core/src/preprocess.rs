//! Mean aggregation to coarser frequencies, the shuffled train/test split and
//! z-score scaling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ChannelId, DataError, FeatureMatrix};
use crate::synthetic::rng;
use crate::time::{Frequency, Timestamp};

/// Default share of rows used for training.
pub const TRAIN_RATIO: f64 = 0.8;
/// Smallest matrix that may be split.
pub const MIN_SPLIT_ROWS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("cannot aggregate {native_secs} s data to the finer {target} frequency")]
    FinerThanNative { native_secs: i64, target: Frequency },
    #[error("at least {needed} rows are required, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("split ratio {0} is outside (0, 1)")]
    BadRatio(f64),
    #[error("column `{0}` has zero variance and cannot be standardised")]
    ZeroVariance(ChannelId),
    #[error("no scaling parameters for column `{0}`")]
    UnknownColumn(ChannelId),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A matrix aggregated to one of the modelling frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyDataset {
    pub frequency: Frequency,
    pub matrix: FeatureMatrix,
    /// Source rows averaged into each output row.
    pub source_counts: Vec<usize>,
}

/// Mean of the source rows in each left-closed interval, labelled by the
/// interval start. Intervals without source rows are absent.
pub fn aggregate(matrix: &FeatureMatrix, frequency: Frequency) -> Result<FrequencyDataset, PreprocessError> {
    if frequency.duration() < matrix.spacing() {
        return Err(PreprocessError::FinerThanNative {
            native_secs: matrix.spacing().num_seconds(),
            target: frequency,
        });
    }
    let mut groups: BTreeMap<Timestamp, Vec<usize>> = BTreeMap::new();
    for (row, ts) in matrix.timestamps().iter().enumerate() {
        groups.entry(frequency.interval_start(*ts)).or_default().push(row);
    }

    let mean_of = |rows: &[usize], col: &[Option<f64>]| -> Option<f64> {
        let (sum, n) = rows
            .iter()
            .filter_map(|&r| col[r])
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    };
    let timestamps: Vec<Timestamp> = groups.keys().copied().collect();
    let features: Vec<Vec<Option<f64>>> = (0..matrix.n_features())
        .map(|j| {
            let col = matrix.feature_at(j);
            groups.values().map(|rows| mean_of(rows, col)).collect()
        })
        .collect();
    let dependent: Vec<f64> = groups
        .values()
        .map(|rows| rows.iter().map(|&r| matrix.dependent()[r]).sum::<f64>() / rows.len() as f64)
        .collect();
    let source_counts = groups.values().map(Vec::len).collect();

    let step = frequency.duration();
    let source_span = matrix.spacing() * matrix.grid_len() as i32;
    let grid_len = (source_span.num_seconds() + step.num_seconds() - 1) / step.num_seconds();
    let out = FeatureMatrix::new(
        timestamps,
        matrix.feature_ids().to_vec(),
        features,
        matrix.dependent_id().clone(),
        dependent,
        step,
        (grid_len as usize).max(groups.len()),
    )?;
    Ok(FrequencyDataset { frequency, matrix: out, source_counts })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub seed: u64,
}

/// Number of training rows for `rows` at `ratio`, rounded to nearest and kept
/// within `1..rows`.
pub fn train_size(rows: usize, ratio: f64) -> usize {
    ((ratio * rows as f64).round() as usize).clamp(1, rows - 1)
}

/// Seeded uniform shuffle, then the first `train_size` rows train. Both halves
/// keep time order.
pub fn split(matrix: &FeatureMatrix, ratio: f64, seed: u64) -> Result<SplitDataset, PreprocessError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PreprocessError::BadRatio(ratio));
    }
    let n = matrix.n_rows();
    if n < MIN_SPLIT_ROWS {
        return Err(PreprocessError::TooFewRows { needed: MIN_SPLIT_ROWS, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let n_train = train_size(n, ratio);
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut test: Vec<usize> = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitDataset {
        train: matrix.select_rows(&train),
        test: matrix.select_rows(&test),
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub id: ChannelId,
    pub mean: f64,
    pub std: f64,
}

/// Per-column mean and sample standard deviation captured on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub columns: Vec<ColumnScaling>,
}

impl ScalingParams {
    pub fn get(&self, id: &ChannelId) -> Result<&ColumnScaling, PreprocessError> {
        self.columns
            .iter()
            .find(|c| &c.id == id)
            .ok_or_else(|| PreprocessError::UnknownColumn(id.clone()))
    }

    /// Standardise every column of `matrix`.
    pub fn transform(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix, PreprocessError> {
        for id in matrix.feature_ids().iter().chain(std::iter::once(matrix.dependent_id())) {
            self.get(id)?;
        }
        let scaled = matrix.map_values(|id, x| {
            let c = self.get(id).expect("checked above");
            Ok((x - c.mean) / c.std)
        })?;
        Ok(scaled)
    }

    pub fn transform_value(&self, id: &ChannelId, value: f64) -> Result<f64, PreprocessError> {
        let c = self.get(id)?;
        Ok((value - c.mean) / c.std)
    }

    /// Map standardised values of `column` back to original units.
    pub fn inverse_transform(&self, values: &[f64], column: &ChannelId) -> Result<Vec<f64>, PreprocessError> {
        let c = self.get(column)?;
        Ok(values.iter().map(|v| v * c.std + c.mean).collect())
    }
}

/// Capture scaling for every predictor and the dependent of a complete matrix.
pub fn fit_scaling(train: &FeatureMatrix) -> Result<ScalingParams, PreprocessError> {
    let mut columns = Vec::with_capacity(train.n_features() + 1);
    let ids = train.feature_ids().iter().chain(std::iter::once(train.dependent_id()));
    for id in ids {
        let values: Vec<f64> = if id == train.dependent_id() {
            train.dependent().to_vec()
        } else {
            train.dense_feature(id)?
        };
        let (mean, std) = mean_and_sample_std(&values);
        if !(std > 0.0) || !std.is_finite() {
            return Err(PreprocessError::ZeroVariance(id.clone()));
        }
        columns.push(ColumnScaling { id: id.clone(), mean, std });
    }
    Ok(ScalingParams { columns })
}

/// Mean and `n − 1` standard deviation (two-pass).
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}
