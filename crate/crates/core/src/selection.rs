//! Feature selection: Spearman ranking, greedy adjusted-R² search and
//! variance-inflation screening.
//!
//! Predictors are ranked by the absolute Spearman coefficient against the
//! dependent variable. Walking that order, a predictor joins the subset only
//! if the least-squares fit with it raises adjusted R² by more than
//! [`IMPROVEMENT_THRESHOLD`]. The survivors are then screened so that no
//! feature has a VIF above [`VIF_LIMIT`].
//!
//! Missing predictor cells are handled by deletion: each correlation uses the
//! rows where that predictor is present, and each regression uses the rows
//! complete across its columns.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{ChannelId, DataError, FeatureMatrix};
use crate::linalg::fit_with_intercept;

/// Minimum absolute gain in adjusted R² for a candidate to be accepted.
pub const IMPROVEMENT_THRESHOLD: f64 = 0.01;
/// Largest variance inflation factor a selected feature may have.
pub const VIF_LIMIT: f64 = 5.0;
/// `1 − R²` at or below this is treated as perfect collinearity.
const PERFECT_FIT_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least {needed} observations are required, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("input has zero variance; the correlation is undefined")]
    ZeroVariance,
    #[error("input contains a missing or non-finite value")]
    NonFinite,
    #[error("design matrix is rank deficient (collinear columns: {0:?})")]
    RankDeficient(Vec<ChannelId>),
    #[error("no predictor yields a fittable model")]
    NothingFittable,
    #[error("at least {0} features are required")]
    TooFewFeatures(usize),
    #[error("matrix has no predictor columns")]
    NoPredictors,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Average (fractional) 1-based ranks; ties share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean((i+1)..=j)
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn has_ties(ranks: &[f64]) -> bool {
    ranks.iter().any(|r| r.fract() != 0.0) || {
        let mut s = ranks.to_vec();
        s.sort_by(f64::total_cmp);
        s.windows(2).any(|w| w[0] == w[1])
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, SelectionError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SelectionError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation.
///
/// With all ranks distinct this is `1 − 6Σd²/(m(m²−1))`; with ties it is
/// the Pearson correlation of the average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, SelectionError> {
    if x.len() != y.len() {
        return Err(SelectionError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(SelectionError::TooFewObservations { needed: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(SelectionError::NonFinite);
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    if has_ties(&rx) || has_ties(&ry) {
        return pearson(&rx, &ry);
    }
    let m = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - 6.0 * d2 / (m * (m * m - 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub id: ChannelId,
    pub rho: f64,
    /// Observations the coefficient was computed on.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExclusionReason {
    ZeroVariance,
    TooFewObservations(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedVariable {
    pub id: ChannelId,
    pub reason: ExclusionReason,
}

/// Predictors ordered by decreasing |rho|, plus those that could not be ranked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub dependent: ChannelId,
    pub ranked: Vec<CorrelationEntry>,
    pub excluded: Vec<ExcludedVariable>,
}

impl CorrelationReport {
    pub fn rank_of(&self, id: &ChannelId) -> Option<usize> {
        self.ranked.iter().position(|e| &e.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# Spearman ranking against {}", self.dependent).unwrap();
        writeln!(out, "rank,id,rho,n").unwrap();
        for (i, e) in self.ranked.iter().enumerate() {
            writeln!(out, "{},{},{:.6},{}", i + 1, e.id, e.rho, e.n).unwrap();
        }
        for x in &self.excluded {
            let reason = match &x.reason {
                ExclusionReason::ZeroVariance => "zero variance".to_string(),
                ExclusionReason::TooFewObservations(n) => format!("only {n} observations"),
            };
            writeln!(out, "excluded,{},{}", x.id, reason).unwrap();
        }
        out
    }
}

/// Rank every predictor against the dependent variable.
pub fn rank_variables(matrix: &FeatureMatrix) -> Result<CorrelationReport, SelectionError> {
    if matrix.n_features() == 0 {
        return Err(SelectionError::NoPredictors);
    }
    let y = matrix.dependent();
    let mut ranked = Vec::new();
    let mut excluded = Vec::new();
    for (idx, id) in matrix.feature_ids().iter().enumerate() {
        let col = matrix.feature_at(idx);
        let (xs, ys): (Vec<f64>, Vec<f64>) = col
            .iter()
            .zip(y)
            .filter_map(|(x, &y)| x.map(|x| (x, y)))
            .unzip();
        match spearman_rho(&xs, &ys) {
            Ok(rho) => ranked.push(CorrelationEntry { id: id.clone(), rho, n: xs.len() }),
            Err(SelectionError::ZeroVariance) => excluded.push(ExcludedVariable {
                id: id.clone(),
                reason: ExclusionReason::ZeroVariance,
            }),
            Err(SelectionError::TooFewObservations { got, .. }) => excluded.push(ExcludedVariable {
                id: id.clone(),
                reason: ExclusionReason::TooFewObservations(got),
            }),
            Err(e) => return Err(e),
        }
    }
    // Stable: equal |rho| keeps column order.
    ranked.sort_by(|a, b| b.rho.abs().partial_cmp(&a.rho.abs()).unwrap_or(Ordering::Equal));
    Ok(CorrelationReport {
        dependent: matrix.dependent_id().clone(),
        ranked,
        excluded,
    })
}

fn complete_columns(
    matrix: &FeatureMatrix,
    features: &[ChannelId],
) -> Result<(Vec<Vec<f64>>, Vec<f64>), SelectionError> {
    let rows = matrix.complete_rows(features)?;
    let cols = features
        .iter()
        .map(|id| {
            let c = matrix.feature(id).expect("checked by complete_rows");
            rows.iter().map(|&r| c[r].expect("complete row")).collect()
        })
        .collect();
    let y = rows.iter().map(|&r| matrix.dependent()[r]).collect();
    Ok((cols, y))
}

/// Adjusted R² of the least-squares fit (with intercept) on `features`.
pub fn fit_ols_adjusted_r2(matrix: &FeatureMatrix, features: &[ChannelId]) -> Result<f64, SelectionError> {
    if features.is_empty() {
        return Err(SelectionError::TooFewFeatures(1));
    }
    let (cols, y) = complete_columns(matrix, features)?;
    if y.len() < features.len() + 2 {
        return Err(SelectionError::TooFewObservations {
            needed: features.len() + 2,
            got: y.len(),
        });
    }
    let fit = fit_with_intercept(&cols, &y);
    if !fit.dropped.is_empty() {
        return Err(SelectionError::RankDeficient(
            fit.dropped.iter().map(|&j| features[j].clone()).collect(),
        ));
    }
    Ok(fit.adjusted_r_squared())
}

/// Variance inflation factor of each feature against the rest.
/// Perfect collinearity is reported as `f64::INFINITY`.
pub fn vif(matrix: &FeatureMatrix, features: &[ChannelId]) -> Result<Vec<(ChannelId, f64)>, SelectionError> {
    if features.len() < 2 {
        return Err(SelectionError::TooFewFeatures(2));
    }
    let (cols, _) = complete_columns(matrix, features)?;
    let n = cols[0].len();
    if n < features.len() + 1 {
        return Err(SelectionError::TooFewObservations { needed: features.len() + 1, got: n });
    }
    let mut out = Vec::with_capacity(features.len());
    for j in 0..features.len() {
        let target = &cols[j];
        let others: Vec<Vec<f64>> = cols
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, c)| c.clone())
            .collect();
        let fit = fit_with_intercept(&others, target);
        let unexplained = if fit.tss == 0.0 { 0.0 } else { fit.rss / fit.tss };
        let value = if unexplained <= PERFECT_FIT_TOL {
            f64::INFINITY
        } else {
            1.0 / unexplained
        };
        out.push((features[j].clone(), value));
    }
    Ok(out)
}

/// One candidate considered by the greedy pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub id: ChannelId,
    /// Adjusted R² with the candidate added; `None` when the fit failed.
    pub adjusted_r2: Option<f64>,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSubset {
    /// Selected features in rank order.
    pub selected: Vec<ChannelId>,
    pub adjusted_r2: f64,
    pub vif: Vec<(ChannelId, f64)>,
    pub steps: Vec<SelectionStep>,
    /// Features removed by the VIF screen, in removal order.
    pub vif_removed: Vec<(ChannelId, f64)>,
}

impl FeatureSubset {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# Selected features (adjusted R2 = {:.4})", self.adjusted_r2).unwrap();
        writeln!(out, "id,vif").unwrap();
        for (id, v) in &self.vif {
            writeln!(out, "{id},{v:.4}").unwrap();
        }
        writeln!(out, "# Greedy pass").unwrap();
        writeln!(out, "id,adjusted_r2,accepted").unwrap();
        for s in &self.steps {
            let r2 = s.adjusted_r2.map(|v| format!("{v:.6}")).unwrap_or_else(|| "unfittable".into());
            writeln!(out, "{},{},{}", s.id, r2, s.accepted).unwrap();
        }
        for (id, v) in &self.vif_removed {
            writeln!(out, "vif_removed,{id},{v:.4}").unwrap();
        }
        out
    }
}

/// Greedy pass over a ranking, followed by the VIF screen.
pub fn select_from_ranking(
    matrix: &FeatureMatrix,
    report: &CorrelationReport,
) -> Result<FeatureSubset, SelectionError> {
    let mut selected: Vec<ChannelId> = Vec::new();
    let mut current: Option<f64> = None;
    let mut steps = Vec::with_capacity(report.ranked.len());
    for entry in &report.ranked {
        let mut candidate = selected.clone();
        candidate.push(entry.id.clone());
        let fitted = fit_ols_adjusted_r2(matrix, &candidate).ok();
        let accepted = match (fitted, current) {
            (Some(_), None) => true,
            (Some(r2), Some(cur)) => r2 - cur > IMPROVEMENT_THRESHOLD,
            (None, _) => false,
        };
        if accepted {
            selected = candidate;
            current = fitted;
        }
        steps.push(SelectionStep { id: entry.id.clone(), adjusted_r2: fitted, accepted });
    }
    let adjusted_r2 = current.ok_or(SelectionError::NothingFittable)?;
    let greedy = FeatureSubset {
        selected,
        adjusted_r2,
        vif: Vec::new(),
        steps,
        vif_removed: Vec::new(),
    };
    vif_screen(greedy, matrix)
}

/// Rank the predictors and run the greedy selection.
pub fn select_features(matrix: &FeatureMatrix) -> Result<FeatureSubset, SelectionError> {
    let report = rank_variables(matrix)?;
    select_from_ranking(matrix, &report)
}

/// Remove the worst-VIF feature until every VIF is at most [`VIF_LIMIT`].
/// Equal VIFs remove the later-ranked feature.
pub fn vif_screen(mut subset: FeatureSubset, matrix: &FeatureMatrix) -> Result<FeatureSubset, SelectionError> {
    let mut removed_any = false;
    loop {
        if subset.selected.len() < 2 {
            subset.vif = subset.selected.iter().map(|id| (id.clone(), 1.0)).collect();
            break;
        }
        let values = vif(matrix, &subset.selected)?;
        let worst = values
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (i, (_, v))| match best {
                Some((_, bv)) if *v < bv => best,
                _ => Some((i, *v)),
            })
            .expect("at least two features");
        if worst.1 <= VIF_LIMIT {
            subset.vif = values;
            break;
        }
        let id = subset.selected.remove(worst.0);
        subset.vif_removed.push((id, worst.1));
        removed_any = true;
    }
    if removed_any {
        subset.adjusted_r2 = fit_ols_adjusted_r2(matrix, &subset.selected)?;
    }
    Ok(subset)
}
