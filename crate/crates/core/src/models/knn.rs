use serde::{Deserialize, Serialize};

use super::{ModelError, Samples};

/// Kernel-weighted k-nearest-neighbour regressor. Stores the training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    /// Minkowski order of the distance.
    pub order: u32,
    pub train: Samples,
}

/// `Σ |a − b|^order`, which orders points exactly like the distance does.
pub fn minkowski_sum(a: &[f64], b: &[f64], order: u32) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += (x - y).abs().powi(order as i32);
    }
    s
}

pub fn distance_from_sum(sum: f64, order: u32) -> f64 {
    if order == 1 {
        sum
    } else {
        sum.powf(1.0 / f64::from(order))
    }
}

/// The `count` nearest training rows as `(distance, index)`, nearest first;
/// equal distances keep index order.
pub fn nearest(train: &Samples, query: &[f64], order: u32, count: usize) -> Vec<(f64, usize)> {
    let count = count.min(train.len());
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(count + 1);
    for i in 0..train.len() {
        let s = minkowski_sum(train.row(i), query, order);
        if best.len() == count && s >= best[count - 1].0 {
            continue;
        }
        let pos = best.partition_point(|(b, _)| *b <= s);
        best.insert(pos, (s, i));
        best.truncate(count);
    }
    for b in &mut best {
        b.0 = distance_from_sum(b.0, order);
    }
    best
}

/// Triangular-kernel average of the first `k` neighbours. The bandwidth is the
/// next neighbour's distance (the k-th when no further point exists); a zero
/// bandwidth or all-zero weights fall back to the plain mean.
pub fn triangular_average(neighbours: &[(f64, usize)], targets: &[f64], k: usize) -> f64 {
    let k = k.min(neighbours.len());
    let bandwidth = if neighbours.len() > k { neighbours[k].0 } else { neighbours[k - 1].0 };
    let used = &neighbours[..k];
    if bandwidth > 0.0 {
        let weights: Vec<f64> = used.iter().map(|&(d, _)| (1.0 - d / bandwidth).max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            return used.iter().zip(&weights).map(|(&(_, i), w)| w / total * targets[i]).sum();
        }
    }
    used.iter().map(|&(_, i)| targets[i]).sum::<f64>() / k as f64
}

impl KnnModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let neighbours = nearest(&self.train, x, self.order, self.k + 1);
        triangular_average(&neighbours, &self.train.y, self.k)
    }
}

pub fn fit_knn(train: &Samples, k: usize, order: u32) -> Result<KnnModel, ModelError> {
    if train.is_empty() {
        return Err(ModelError::TooFewRows { needed: 1, got: 0 });
    }
    if k == 0 || k > train.len() {
        return Err(ModelError::InvalidParameter(format!(
            "k = {k} must lie in 1..={}",
            train.len()
        )));
    }
    if order == 0 {
        return Err(ModelError::InvalidParameter("distance order must be at least 1".into()));
    }
    Ok(KnnModel { k, order, train: train.clone() })
}
