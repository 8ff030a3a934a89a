//! Availability statistics, box-plot outlier flags, the omission rule and
//! removal-only cleaning.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{ChannelId, DataError, FeatureMatrix};
use crate::time::{format_timestamp, Timestamp};

/// Default share of poor-quality grid rows above which a feature is omitted.
pub const OMISSION_THRESHOLD: f64 = 0.05;
/// Cleaning may drop at most this share of rows.
pub const MAX_DROP_FRACTION: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum QualityError {
    #[error("`{id}` has {count} values; at least 4 are needed for stable quartiles")]
    TooFewValues { id: ChannelId, count: usize },
    #[error("column `{0}` is not in the matrix")]
    UnknownColumn(ChannelId),
    #[error("column `{0}` has no availability summary")]
    NotAssessed(ChannelId),
    #[error("cleaning would drop {dropped} of {total} rows; not enough clean data remains")]
    InsufficientData { dropped: usize, total: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Linear-interpolation quantile of sorted data (`0 ≤ p ≤ 1`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureAvailability {
    pub id: ChannelId,
    pub mean: f64,
    pub median: f64,
    pub unique_count: usize,
    /// Grid rows without a reading.
    pub missing_count: usize,
    pub q1: f64,
    pub q3: f64,
    pub minimum: f64,
    pub maximum: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub outlier_count: usize,
    pub outliers: Vec<(Timestamp, f64)>,
    pub poor_quality_fraction: f64,
}

impl FeatureAvailability {
    pub fn is_outlier(&self, value: f64) -> bool {
        value < self.lower_fence || value > self.upper_fence
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvailabilitySummary {
    pub grid_rows: usize,
    pub features: Vec<FeatureAvailability>,
}

impl AvailabilitySummary {
    pub fn get(&self, id: &ChannelId) -> Option<&FeatureAvailability> {
        self.features.iter().find(|f| &f.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# Data availability ({} grid rows)", self.grid_rows).unwrap();
        writeln!(
            out,
            "id,mean,median,unique,missing,q1,q3,min,max,outliers,poor_quality_fraction"
        )
        .unwrap();
        for f in &self.features {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{:.6}",
                f.id,
                f.mean,
                f.median,
                f.unique_count,
                f.missing_count,
                f.q1,
                f.q3,
                f.minimum,
                f.maximum,
                f.outlier_count,
                f.poor_quality_fraction
            )
            .unwrap();
        }
        out
    }

    /// Five-number summary and fences per feature, one row each.
    pub fn boxplot_csv(&self) -> String {
        let mut out = String::from("id,min,q1,median,q3,max,lower_fence,upper_fence,outliers\n");
        for f in &self.features {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                f.id, f.minimum, f.q1, f.median, f.q3, f.maximum, f.lower_fence, f.upper_fence, f.outlier_count
            )
            .unwrap();
        }
        out
    }

    /// Every flagged outlier as `id,timestamp,value`.
    pub fn outliers_csv(&self) -> String {
        let mut out = String::from("id,timestamp,value\n");
        for f in &self.features {
            for (ts, v) in &f.outliers {
                writeln!(out, "{},{},{}", f.id, format_timestamp(*ts), v).unwrap();
            }
        }
        out
    }
}

/// Availability statistics for `ids` (predictors or the dependent) over the
/// matrix's native grid.
pub fn assess(matrix: &FeatureMatrix, ids: &[ChannelId]) -> Result<AvailabilitySummary, QualityError> {
    let grid_rows = matrix.grid_len();
    let mut features = Vec::with_capacity(ids.len());
    for id in ids {
        let column = matrix.column(id).ok_or_else(|| QualityError::UnknownColumn(id.clone()))?;
        let present: Vec<(Timestamp, f64)> = matrix
            .timestamps()
            .iter()
            .zip(&column)
            .filter_map(|(t, v)| v.map(|x| (*t, x)))
            .collect();
        if present.len() < 4 {
            return Err(QualityError::TooFewValues { id: id.clone(), count: present.len() });
        }
        let mut sorted: Vec<f64> = present.iter().map(|(_, v)| *v).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let q1 = quantile_sorted(&sorted, 0.25);
        let median = quantile_sorted(&sorted, 0.5);
        let q3 = quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let lower_fence = q1 - 1.5 * iqr;
        let upper_fence = q3 + 1.5 * iqr;
        let mut unique_count = 1;
        for w in sorted.windows(2) {
            if w[1] != w[0] {
                unique_count += 1;
            }
        }
        let outliers: Vec<(Timestamp, f64)> = present
            .iter()
            .filter(|(_, v)| *v < lower_fence || *v > upper_fence)
            .copied()
            .collect();
        let missing_count = grid_rows.saturating_sub(n);
        features.push(FeatureAvailability {
            id: id.clone(),
            mean,
            median,
            unique_count,
            missing_count,
            q1,
            q3,
            minimum: sorted[0],
            maximum: sorted[n - 1],
            lower_fence,
            upper_fence,
            outlier_count: outliers.len(),
            poor_quality_fraction: (missing_count + outliers.len()) as f64 / grid_rows as f64,
            outliers,
        });
    }
    Ok(AvailabilitySummary { grid_rows, features })
}

/// Features whose poor-quality share strictly exceeds `threshold`.
pub fn omit_poor_features(summary: &AvailabilitySummary, threshold: f64) -> Vec<ChannelId> {
    summary
        .features
        .iter()
        .filter(|f| f.poor_quality_fraction > threshold)
        .map(|f| f.id.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CleanOutcome {
    pub matrix: FeatureMatrix,
    /// Timestamps of removed rows.
    pub dropped: Vec<Timestamp>,
}

/// Drop every row holding a missing cell or a flagged outlier in any
/// predictor or the dependent. Values are never altered.
pub fn clean(matrix: &FeatureMatrix, summary: &AvailabilitySummary) -> Result<CleanOutcome, QualityError> {
    let mut checks: Vec<(Vec<Option<f64>>, Option<&FeatureAvailability>)> = Vec::new();
    for id in matrix.feature_ids() {
        let stats = summary.get(id).ok_or_else(|| QualityError::NotAssessed(id.clone()))?;
        checks.push((matrix.feature(id).expect("listed").to_vec(), Some(stats)));
    }
    let dep = matrix.dependent_id();
    checks.push((matrix.column(dep).expect("dependent"), summary.get(dep)));

    let mut keep = Vec::with_capacity(matrix.n_rows());
    let mut dropped = Vec::new();
    for (row, ts) in matrix.timestamps().iter().enumerate() {
        let bad = checks.iter().any(|(col, stats)| match col[row] {
            None => true,
            Some(v) => stats.is_some_and(|s| s.is_outlier(v)),
        });
        if bad {
            dropped.push(*ts);
        } else {
            keep.push(row);
        }
    }
    let total = matrix.n_rows();
    if dropped.len() as f64 > MAX_DROP_FRACTION * total as f64 {
        return Err(QualityError::InsufficientData { dropped: dropped.len(), total });
    }
    Ok(CleanOutcome { matrix: matrix.select_rows(&keep), dropped })
}
