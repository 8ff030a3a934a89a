use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ann::{fit_ann, AnnSettings};
use super::knn::{fit_knn, nearest, triangular_average};
use super::ols::fit_ols;
use super::svr::{fit_svr, SvrSettings};
use super::{Family, Fitted, HyperGrid, HyperParams, ModelError, Samples};
use crate::synthetic::rng;

/// Validation indices of each fold: contiguous blocks of a seeded shuffle.
pub fn fold_plan(rows: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, ModelError> {
    if folds < 2 || rows < folds {
        return Err(ModelError::TooFewRows { needed: folds.max(2), got: rows });
    }
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut rng(seed));
    let base = rows / folds;
    let extra = rows % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

fn complement(rows: usize, held_out: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; rows];
    for &i in held_out {
        mask[i] = false;
    }
    (0..rows).filter(|&i| mask[i]).collect()
}

/// Score of one grid point; `None` when any fold failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub params: HyperParams,
    pub cv_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutcome {
    pub params: HyperParams,
    pub fitted: Fitted,
    pub cv_rmse: f64,
    pub candidates: Vec<Candidate>,
}

/// Fit one configuration on `train`.
pub fn fit(train: &Samples, params: &HyperParams, seed: u64) -> Result<Fitted, ModelError> {
    match *params {
        HyperParams::Ols { intercept } => fit_ols(train, intercept).map(Fitted::Ols),
        HyperParams::Knn { k, order } => fit_knn(train, k, order).map(Fitted::Knn),
        HyperParams::Ann { hidden, decay, max_iter, threshold } => {
            fit_ann(train, AnnSettings { hidden, decay, max_iter, threshold }, seed).map(Fitted::Ann)
        }
        HyperParams::Svm { cost, epsilon } => {
            let settings = SvrSettings { epsilon, ..SvrSettings::with_cost(cost) };
            fit_svr(train, settings, seed).map(Fitted::Svm)
        }
    }
}

fn rmse(sse: f64, n: usize) -> f64 {
    (sse / n as f64).sqrt()
}

/// Mean validation RMSE over the folds for each candidate, in candidate order.
fn cross_validate(
    data: &Samples,
    candidates: &[HyperParams],
    folds: &[Vec<usize>],
    seed: u64,
) -> Vec<Result<f64, ModelError>> {
    let splits: Vec<(Samples, Samples)> = folds
        .iter()
        .map(|val| (data.subset(&complement(data.len(), val)), data.subset(val)))
        .collect();

    // kNN candidates sharing a distance order reuse one neighbour search.
    let mut results: Vec<Option<Result<f64, ModelError>>> = (0..candidates.len()).map(|_| None).collect();
    let mut orders: Vec<u32> = candidates
        .iter()
        .filter_map(|c| match c {
            HyperParams::Knn { order, .. } => Some(*order),
            _ => None,
        })
        .collect();
    orders.sort_unstable();
    orders.dedup();
    for order in orders {
        let members: Vec<(usize, usize)> = candidates
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                HyperParams::Knn { k, order: o } if *o == order => Some((i, *k)),
                _ => None,
            })
            .collect();
        let k_max = members.iter().map(|m| m.1).max().unwrap_or(1);
        let mut totals = vec![0.0; members.len()];
        let mut failed: Vec<Option<ModelError>> = (0..members.len()).map(|_| None).collect();
        for (train, val) in &splits {
            let mut sse = vec![0.0; members.len()];
            for q in 0..val.len() {
                let neighbours = nearest(train, val.row(q), order, k_max + 1);
                for (m, &(_, k)) in members.iter().enumerate() {
                    let e = triangular_average(&neighbours, &train.y, k) - val.y[q];
                    sse[m] += e * e;
                }
            }
            for (m, &(_, k)) in members.iter().enumerate() {
                if k == 0 || k > train.len() || order == 0 {
                    failed[m] = Some(ModelError::InvalidParameter(format!(
                        "k = {k}, order {order} with {} training rows",
                        train.len()
                    )));
                }
                totals[m] += rmse(sse[m], val.len());
            }
        }
        for (m, &(i, _)) in members.iter().enumerate() {
            results[i] = Some(match failed[m].take() {
                Some(e) => Err(e),
                None => Ok(totals[m] / splits.len() as f64),
            });
        }
    }

    for (i, params) in candidates.iter().enumerate() {
        if results[i].is_some() {
            continue;
        }
        let mut total = 0.0;
        let mut outcome = Ok(());
        for (train, val) in &splits {
            match fit(train, params, seed) {
                Ok(model) => {
                    let sse: f64 = (0..val.len())
                        .map(|q| (model.predict(val.row(q)) - val.y[q]).powi(2))
                        .sum();
                    total += rmse(sse, val.len());
                }
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
        }
        results[i] = Some(outcome.and_then(|()| {
            let score = total / splits.len() as f64;
            if score.is_finite() {
                Ok(score)
            } else {
                Err(ModelError::NonFiniteLoss)
            }
        }));
    }
    results.into_iter().map(|r| r.expect("every candidate scored")).collect()
}

/// Score every grid point for `family` by k-fold cross-validation and refit the
/// best on all of `train`. Candidates are ordered simplest first and only a
/// strictly lower score displaces an earlier one.
pub fn grid_search(train: &Samples, family: Family, grid: &HyperGrid, seed: u64) -> Result<GridOutcome, ModelError> {
    let candidates = grid.candidates(family);
    if candidates.is_empty() {
        return Err(ModelError::InvalidParameter(format!("empty {family} grid")));
    }
    let folds = fold_plan(train.len(), grid.folds, seed)?;
    let scores = cross_validate(train, &candidates, &folds, seed);

    let mut best: Option<(usize, f64)> = None;
    let mut report = Vec::with_capacity(candidates.len());
    for (i, (params, score)) in candidates.iter().zip(&scores).enumerate() {
        match score {
            Ok(s) => {
                if best.map_or(true, |(_, b)| *s < b) {
                    best = Some((i, *s));
                }
                report.push(Candidate { params: params.clone(), cv_rmse: Some(*s), error: None });
            }
            Err(e) => report.push(Candidate { params: params.clone(), cv_rmse: None, error: Some(e.to_string()) }),
        }
    }
    let (index, cv_rmse) = best.ok_or_else(|| ModelError::AllCandidatesFailed {
        family,
        reasons: report.iter().filter_map(|c| c.error.clone()).collect(),
    })?;
    let params = candidates[index].clone();
    let fitted = fit(train, &params, seed)?;
    Ok(GridOutcome { params, fitted, cv_rmse, candidates: report })
}
