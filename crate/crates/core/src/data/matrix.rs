use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{ChannelId, DataError};
use crate::time::Timestamp;

/// Observation table: one row per timestamp, predictor columns that may hold
/// missing cells, and a fully populated dependent column.
///
/// Rows are usually in time order, but the training half of a shuffled split
/// keeps its shuffled order, so nothing here assumes sorting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    timestamps: Vec<Timestamp>,
    feature_ids: Vec<ChannelId>,
    /// Column-major predictor cells.
    features: Vec<Vec<Option<f64>>>,
    dependent_id: ChannelId,
    dependent: Vec<f64>,
    #[serde(with = "super::duration_secs")]
    spacing: Duration,
    /// Grid slots the rows were drawn from (denominator for missing counts).
    grid_len: usize,
}

impl FeatureMatrix {
    pub fn new(
        timestamps: Vec<Timestamp>,
        feature_ids: Vec<ChannelId>,
        features: Vec<Vec<Option<f64>>>,
        dependent_id: ChannelId,
        dependent: Vec<f64>,
        spacing: Duration,
        grid_len: usize,
    ) -> Result<Self, DataError> {
        let n = timestamps.len();
        if feature_ids.len() != features.len() {
            return Err(DataError::Shape(format!(
                "{} feature ids for {} columns",
                feature_ids.len(),
                features.len()
            )));
        }
        if dependent.len() != n || features.iter().any(|c| c.len() != n) {
            return Err(DataError::Shape(format!("columns do not all have {n} rows")));
        }
        let mut ids: Vec<&ChannelId> = feature_ids.iter().chain(std::iter::once(&dependent_id)).collect();
        ids.sort();
        if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(DataError::DuplicateChannel(dup[0].clone()));
        }
        if grid_len < n {
            return Err(DataError::Shape(format!("grid of {grid_len} slots cannot hold {n} rows")));
        }
        Ok(FeatureMatrix {
            timestamps,
            feature_ids,
            features,
            dependent_id,
            dependent,
            spacing,
            grid_len,
        })
    }

    /// Build a complete matrix from dense columns; grid length equals row count.
    pub fn from_dense(
        timestamps: Vec<Timestamp>,
        columns: Vec<(ChannelId, Vec<f64>)>,
        dependent_id: ChannelId,
        dependent: Vec<f64>,
        spacing: Duration,
    ) -> Result<Self, DataError> {
        let n = timestamps.len();
        let (ids, cols): (Vec<_>, Vec<_>) = columns
            .into_iter()
            .map(|(id, c)| (id, c.into_iter().map(Some).collect::<Vec<_>>()))
            .unzip();
        Self::new(timestamps, ids, cols, dependent_id, dependent, spacing, n)
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn feature_ids(&self) -> &[ChannelId] {
        &self.feature_ids
    }

    pub fn dependent_id(&self) -> &ChannelId {
        &self.dependent_id
    }

    pub fn dependent(&self) -> &[f64] {
        &self.dependent
    }

    pub fn spacing(&self) -> Duration {
        self.spacing
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn feature_index(&self, id: &ChannelId) -> Option<usize> {
        self.feature_ids.iter().position(|f| f == id)
    }

    pub fn feature(&self, id: &ChannelId) -> Option<&[Option<f64>]> {
        self.feature_index(id).map(|i| self.features[i].as_slice())
    }

    pub fn feature_at(&self, index: usize) -> &[Option<f64>] {
        &self.features[index]
    }

    /// Any column by id, the dependent included.
    pub fn column(&self, id: &ChannelId) -> Option<Vec<Option<f64>>> {
        if id == &self.dependent_id {
            return Some(self.dependent.iter().copied().map(Some).collect());
        }
        self.feature(id).map(<[_]>::to_vec)
    }

    pub fn has_column(&self, id: &ChannelId) -> bool {
        id == &self.dependent_id || self.feature_index(id).is_some()
    }

    pub fn is_complete(&self) -> bool {
        self.features.iter().all(|c| c.iter().all(Option::is_some))
    }

    /// Dense copy of one predictor; errors if any cell is missing.
    pub fn dense_feature(&self, id: &ChannelId) -> Result<Vec<f64>, DataError> {
        let col = self.feature(id).ok_or_else(|| DataError::UnknownChannel(id.clone()))?;
        col.iter()
            .map(|v| v.ok_or_else(|| DataError::MissingValues(id.clone())))
            .collect()
    }

    /// Rows with every listed predictor present.
    pub fn complete_rows(&self, ids: &[ChannelId]) -> Result<Vec<usize>, DataError> {
        let cols = ids
            .iter()
            .map(|id| self.feature(id).ok_or_else(|| DataError::UnknownChannel(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((0..self.n_rows())
            .filter(|&r| cols.iter().all(|c| c[r].is_some()))
            .collect())
    }

    /// Keep only the listed predictors, in the given order.
    pub fn select_features(&self, ids: &[ChannelId]) -> Result<FeatureMatrix, DataError> {
        let features = ids
            .iter()
            .map(|id| {
                self.feature(id)
                    .map(<[_]>::to_vec)
                    .ok_or_else(|| DataError::UnknownChannel(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureMatrix {
            feature_ids: ids.to_vec(),
            features,
            ..self.clone_without_features()
        })
    }

    /// Drop the listed predictors; unknown ids are ignored.
    pub fn without_features(&self, ids: &[ChannelId]) -> FeatureMatrix {
        let keep: Vec<ChannelId> = self
            .feature_ids
            .iter()
            .filter(|id| !ids.contains(id))
            .cloned()
            .collect();
        self.select_features(&keep).expect("ids come from the matrix")
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            timestamps: rows.iter().map(|&r| self.timestamps[r]).collect(),
            feature_ids: self.feature_ids.clone(),
            features: self
                .features
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            dependent_id: self.dependent_id.clone(),
            dependent: rows.iter().map(|&r| self.dependent[r]).collect(),
            spacing: self.spacing,
            grid_len: self.grid_len,
        }
    }

    /// Same rows, with every value mapped through `f(column id, value)`.
    pub(crate) fn map_values<F>(&self, mut f: F) -> Result<FeatureMatrix, DataError>
    where
        F: FnMut(&ChannelId, f64) -> Result<f64, DataError>,
    {
        let mut features = Vec::with_capacity(self.features.len());
        for (id, col) in self.feature_ids.iter().zip(&self.features) {
            let mapped = col
                .iter()
                .map(|v| v.map(|x| f(id, x)).transpose())
                .collect::<Result<Vec<_>, _>>()?;
            features.push(mapped);
        }
        let dependent = self
            .dependent
            .iter()
            .map(|&y| f(&self.dependent_id, y))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureMatrix {
            feature_ids: self.feature_ids.clone(),
            features,
            dependent,
            ..self.clone_without_features()
        })
    }

    #[cfg(test)]
    pub(crate) fn with_grid(mut self, spacing: Duration, grid_len: usize) -> FeatureMatrix {
        self.spacing = spacing;
        self.grid_len = grid_len.max(self.timestamps.len());
        self
    }

    fn clone_without_features(&self) -> FeatureMatrix {
        FeatureMatrix {
            timestamps: self.timestamps.clone(),
            feature_ids: Vec::new(),
            features: Vec::new(),
            dependent_id: self.dependent_id.clone(),
            dependent: self.dependent.clone(),
            spacing: self.spacing,
            grid_len: self.grid_len,
        }
    }

    /// Row-major dense predictors; errors on any missing cell.
    pub fn dense_rows(&self) -> Result<Vec<Vec<f64>>, DataError> {
        let mut rows = vec![Vec::with_capacity(self.n_features()); self.n_rows()];
        for (id, col) in self.feature_ids.iter().zip(&self.features) {
            for (row, v) in rows.iter_mut().zip(col) {
                row.push(v.ok_or_else(|| DataError::MissingValues(id.clone()))?);
            }
        }
        Ok(rows)
    }
}
