use super::{DataError, FeatureMatrix, RawDataset, TaggedChannel};
use crate::time::{DatePeriod, Timestamp};

/// Lay every channel onto the native grid anchored at the period start.
///
/// A row is kept only where the dependent variable is present; predictor
/// cells without a sample stay missing. Samples falling between grid
/// instants are rejected rather than snapped.
pub fn align(dataset: &RawDataset, period: &DatePeriod) -> Result<FeatureMatrix, DataError> {
    let dep_id = dataset.dependent.clone().ok_or(DataError::NoDependent)?;
    let step = dataset.native_frequency;
    let grid: Vec<Timestamp> = period.grid(step).collect();

    let on_grid = |ch: &TaggedChannel| -> Result<Vec<Option<f64>>, DataError> {
        let mut out = vec![None; grid.len()];
        let start = period.start_instant();
        for &(ts, v) in &ch.series {
            if !period.contains(ts) {
                continue;
            }
            let offset = (ts - start).num_seconds();
            if offset % step.num_seconds() != 0 {
                return Err(DataError::OffGrid {
                    channel: ch.id.clone(),
                    timestamp: ts,
                    spacing_secs: step.num_seconds(),
                });
            }
            out[(offset / step.num_seconds()) as usize] = v;
        }
        Ok(out)
    };

    let dep_channel = dataset
        .channel(&dep_id)
        .ok_or_else(|| DataError::UnknownChannel(dep_id.clone()))?;
    let dep_cells = on_grid(dep_channel)?;
    let keep: Vec<usize> = (0..grid.len()).filter(|&i| dep_cells[i].is_some()).collect();
    if keep.is_empty() {
        return Err(DataError::DependentAbsent(dep_id));
    }

    let mut ids = Vec::new();
    let mut features = Vec::new();
    for ch in dataset.channels.iter().filter(|c| c.id != dep_id) {
        let cells = on_grid(ch)?;
        ids.push(ch.id.clone());
        features.push(keep.iter().map(|&i| cells[i]).collect());
    }
    FeatureMatrix::new(
        keep.iter().map(|&i| grid[i]).collect(),
        ids,
        features,
        dep_id,
        keep.iter().map(|&i| dep_cells[i].expect("filtered")).collect(),
        step,
        grid.len(),
    )
}
