//! Range gating, adjusted baseline, non-routine adjustments and savings
//! uncertainty.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{ChannelId, DataError, FeatureMatrix};
use crate::evaluation::ModelScore;
use crate::models::{FeatureRange, Family, ModelError, TrainedModel};
use crate::time::{format_timestamp, DatePeriod, Frequency, Timestamp};

/// Reporting values may exceed the training maximum by this factor.
pub const RANGE_UPPER_FACTOR: f64 = 1.1;
/// Reporting values may fall to this factor of the training minimum.
pub const RANGE_LOWER_FACTOR: f64 = 0.9;
pub const RANGE_ADVISORY: &str = "beyond the range of applicability of the model";
/// Assumption behind the total standard error, printed with every report.
pub const INDEPENDENCE_NOTE: &str =
    "SE over the reporting total assumes independent per-interval errors: SE_total = RMSE * sqrt(sum of squared interval weights)";

#[derive(Debug, thiserror::Error)]
pub enum SavingsError {
    #[error("series lengths differ ({0} vs {1})")]
    Misaligned(usize, usize),
    #[error("adjustment `{name}` has factor {factor}; factors must be positive")]
    BadFactor { name: String, factor: f64 },
    #[error("adjustment `{0}` lies outside the reporting period")]
    OutsidePeriod(String),
    #[error("confidence {0} is outside (0, 1)")]
    BadConfidence(f64),
    #[error("at least two test points are needed for a t value, got {0}")]
    TooFewTestPoints(usize),
    #[error("fractional savings must be non-zero")]
    ZeroFraction,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("adjustments file: {0}")]
    File(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeVerdict {
    pub id: ChannelId,
    pub within: bool,
    pub observed_min: f64,
    pub observed_max: f64,
    pub training_min: f64,
    pub training_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeGateResult {
    pub features: Vec<RangeVerdict>,
    pub advisories: Vec<String>,
}

impl RangeGateResult {
    pub fn all_within(&self) -> bool {
        self.features.iter().all(|f| f.within)
    }
}

fn observed_range(matrix: &FeatureMatrix, id: &ChannelId) -> Option<(f64, f64)> {
    let col = matrix.feature(id)?;
    let present = col.iter().flatten().copied();
    present.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Check reporting features against stored training ranges. Violations only
/// produce advisories.
pub fn gate_against_ranges(reporting: &FeatureMatrix, ranges: &[FeatureRange]) -> RangeGateResult {
    let mut features = Vec::new();
    let mut advisories = Vec::new();
    for r in ranges {
        let Some((lo, hi)) = observed_range(reporting, &r.id) else {
            advisories.push(format!("{}: no reporting data to check", r.id));
            continue;
        };
        let within = hi <= RANGE_UPPER_FACTOR * r.max && lo >= RANGE_LOWER_FACTOR * r.min;
        if !within {
            advisories.push(format!(
                "{}: reporting range [{lo}, {hi}] vs training [{}, {}] is {RANGE_ADVISORY}",
                r.id, r.min, r.max
            ));
        }
        features.push(RangeVerdict {
            id: r.id.clone(),
            within,
            observed_min: lo,
            observed_max: hi,
            training_min: r.min,
            training_max: r.max,
        });
    }
    RangeGateResult { features, advisories }
}

/// Range gate using the training matrix's own feature ranges.
pub fn gate_range(reporting: &FeatureMatrix, training: &FeatureMatrix) -> RangeGateResult {
    let ranges: Vec<FeatureRange> = training
        .feature_ids()
        .iter()
        .filter_map(|id| observed_range(training, id).map(|(min, max)| FeatureRange { id: id.clone(), min, max }))
        .collect();
    gate_against_ranges(reporting, &ranges)
}

/// Model predictions over the reporting matrix, in original units.
pub fn adjusted_baseline(model: &TrainedModel, reporting: &FeatureMatrix) -> Result<Vec<f64>, SavingsError> {
    if reporting.spacing() != model.frequency.duration() {
        return Err(SavingsError::Invalid(format!(
            "reporting data spacing {} s does not match the {} model",
            reporting.spacing().num_seconds(),
            model.frequency
        )));
    }
    Ok(model.predict(reporting)?)
}

/// A stakeholder-agreed multiplicative correction to the adjusted baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentRecord {
    pub name: String,
    pub period: DatePeriod,
    pub factor: f64,
    pub justification: String,
    pub stakeholders: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct AdjustmentFile {
    #[serde(default)]
    adjustment: Vec<AdjustmentRecord>,
}

pub fn adjustments_from_toml(text: &str) -> Result<Vec<AdjustmentRecord>, SavingsError> {
    let file: AdjustmentFile = toml::from_str(text).map_err(|e| SavingsError::File(e.to_string()))?;
    for a in &file.adjustment {
        if !(a.factor > 0.0) || !a.factor.is_finite() {
            return Err(SavingsError::BadFactor { name: a.name.clone(), factor: a.factor });
        }
    }
    Ok(file.adjustment)
}

pub fn adjustments_to_toml(records: &[AdjustmentRecord]) -> String {
    toml::to_string(&AdjustmentFile { adjustment: records.to_vec() }).expect("adjustments serialise")
}

pub fn load_adjustments(path: &Path) -> Result<Vec<AdjustmentRecord>, SavingsError> {
    let text = std::fs::read_to_string(path).map_err(|e| SavingsError::File(format!("{}: {e}", path.display())))?;
    adjustments_from_toml(&text)
}

/// Each adjustment must sit inside the reporting period.
pub fn validate_adjustments(records: &[AdjustmentRecord], reporting: &DatePeriod) -> Result<(), SavingsError> {
    for a in records {
        if !(a.factor > 0.0) || !a.factor.is_finite() {
            return Err(SavingsError::BadFactor { name: a.name.clone(), factor: a.factor });
        }
        if !a.period.is_valid() || !reporting.contains_period(&a.period) {
            return Err(SavingsError::OutsidePeriod(a.name.clone()));
        }
    }
    Ok(())
}

/// Audit entry for one applied adjustment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentAudit {
    pub record: AdjustmentRecord,
    pub intervals: usize,
    pub baseline_before: f64,
    pub baseline_after: f64,
}

/// Multiply baseline values whose interval start lies in each record's period
/// by its factor; overlapping records compose.
pub fn apply_adjustments(
    timestamps: &[Timestamp],
    baseline: &[f64],
    adjustments: &[AdjustmentRecord],
) -> Result<(Vec<f64>, Vec<AdjustmentAudit>), SavingsError> {
    if timestamps.len() != baseline.len() {
        return Err(SavingsError::Misaligned(timestamps.len(), baseline.len()));
    }
    let mut out = baseline.to_vec();
    let mut audit = Vec::with_capacity(adjustments.len());
    for a in adjustments {
        if !(a.factor > 0.0) || !a.factor.is_finite() {
            return Err(SavingsError::BadFactor { name: a.name.clone(), factor: a.factor });
        }
        let before: f64 = out.iter().sum();
        let mut intervals = 0;
        for (v, ts) in out.iter_mut().zip(timestamps) {
            if a.period.contains(*ts) {
                *v *= a.factor;
                intervals += 1;
            }
        }
        audit.push(AdjustmentAudit {
            record: a.clone(),
            intervals,
            baseline_before: before,
            baseline_after: out.iter().sum(),
        });
    }
    Ok((out, audit))
}

/// Two-sided Student-t quantile for `confidence` with `df` degrees of freedom.
pub fn t_value(confidence: f64, df: f64) -> Result<f64, SavingsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(SavingsError::BadConfidence(confidence));
    }
    if !(df > 0.0) {
        return Err(SavingsError::Invalid(format!("degrees of freedom {df}")));
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| SavingsError::Invalid(e.to_string()))?;
    Ok(dist.inverse_cdf((1.0 + confidence) / 2.0))
}

/// Savings with its uncertainty range from already-totalled figures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavingsRange {
    pub savings: f64,
    pub se_total: f64,
    pub t_value: f64,
    pub uncertainty: f64,
    pub low: f64,
    pub high: f64,
    pub acceptable: bool,
}

impl SavingsRange {
    pub fn new(savings: f64, se_total: f64, t_value: f64) -> Self {
        let uncertainty = t_value * se_total;
        SavingsRange {
            savings,
            se_total,
            t_value,
            uncertainty,
            low: savings - uncertainty,
            high: savings + uncertainty,
            acceptable: is_acceptable(savings, se_total),
        }
    }
}

/// Savings must exceed twice the standard error.
pub fn is_acceptable(savings: f64, se: f64) -> bool {
    savings > 2.0 * se
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSavings {
    pub timestamp: Timestamp,
    pub measured: f64,
    pub adjusted_baseline: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub family: Family,
    pub frequency: Frequency,
    pub intervals: Vec<IntervalSavings>,
    pub total_measured: f64,
    pub total_baseline: f64,
    pub total_savings: f64,
    /// Test-set RMSE of the model, per native sample.
    pub se: f64,
    pub se_total: f64,
    pub n_test: usize,
    pub degrees_of_freedom: f64,
    pub t_value: f64,
    pub uncertainty: f64,
    pub range_low: f64,
    pub range_high: f64,
    pub confidence: f64,
    pub acceptable: bool,
    pub advisories: Vec<String>,
    pub adjustments: Vec<AdjustmentAudit>,
}

impl SavingsReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        writeln!(w, "model: {} {}", self.frequency, self.family).unwrap();
        writeln!(w, "intervals: {}", self.intervals.len()).unwrap();
        writeln!(w, "measured total: {:.3}", self.total_measured).unwrap();
        writeln!(w, "adjusted baseline total: {:.3}", self.total_baseline).unwrap();
        writeln!(w, "total savings: {:.3}", self.total_savings).unwrap();
        writeln!(w, "SE (test RMSE): {:.6}", self.se).unwrap();
        writeln!(w, "SE over reporting total: {:.3}", self.se_total).unwrap();
        writeln!(w, "note: {INDEPENDENCE_NOTE}").unwrap();
        writeln!(w, "t ({:.0}% two-sided, df {}): {:.6}", self.confidence * 100.0, self.degrees_of_freedom, self.t_value)
            .unwrap();
        writeln!(w, "uncertainty U = t * SE: {:.3}", self.uncertainty).unwrap();
        writeln!(
            w,
            "range of savings: {:.3} to {:.3} @ {:.0}% confidence",
            self.range_low,
            self.range_high,
            self.confidence * 100.0
        )
        .unwrap();
        writeln!(
            w,
            "acceptable (savings > 2 x SE): {}",
            if self.acceptable { "Yes" } else { "No" }
        )
        .unwrap();
        for a in &self.adjustments {
            writeln!(
                w,
                "adjustment: {} factor {} over {} to {} ({} intervals; baseline {:.3} -> {:.3}); justification: {}; stakeholders: {}",
                a.record.name,
                a.record.factor,
                a.record.period.start,
                a.record.period.end,
                a.intervals,
                a.baseline_before,
                a.baseline_after,
                a.record.justification,
                a.record.stakeholders
            )
            .unwrap();
        }
        for adv in &self.advisories {
            writeln!(w, "ADVISORY: {adv}").unwrap();
        }
        out
    }

    /// Measured and adjusted-baseline series, one row per interval.
    pub fn timeseries_csv(&self) -> String {
        let mut out = String::from("timestamp,measured,adjusted_baseline\n");
        for i in &self.intervals {
            writeln!(out, "{},{},{}", format_timestamp(i.timestamp), i.measured, i.adjusted_baseline).unwrap();
        }
        out
    }
}

/// Savings report for aligned interval series with unit weights.
pub fn quantify(
    timestamps: &[Timestamp],
    measured: &[f64],
    baseline: &[f64],
    score: &ModelScore,
    confidence: f64,
) -> Result<SavingsReport, SavingsError> {
    let weights = vec![1.0; measured.len()];
    quantify_weighted(timestamps, measured, baseline, &weights, score, confidence)
}

/// Savings report where interval `i` stands for `weights[i]` native samples:
/// interval energy is the interval mean times its weight, and the total
/// standard error is `RMSE · √Σwᵢ²`.
pub fn quantify_weighted(
    timestamps: &[Timestamp],
    measured: &[f64],
    baseline: &[f64],
    weights: &[f64],
    score: &ModelScore,
    confidence: f64,
) -> Result<SavingsReport, SavingsError> {
    let n = measured.len();
    for len in [baseline.len(), weights.len(), timestamps.len()] {
        if len != n {
            return Err(SavingsError::Misaligned(n, len));
        }
    }
    if score.n_test < 2 {
        return Err(SavingsError::TooFewTestPoints(score.n_test));
    }
    let df = (score.n_test - 1) as f64;
    let t = t_value(confidence, df)?;
    let intervals: Vec<IntervalSavings> = (0..n)
        .map(|i| IntervalSavings {
            timestamp: timestamps[i],
            measured: measured[i] * weights[i],
            adjusted_baseline: baseline[i] * weights[i],
        })
        .collect();
    let total_measured: f64 = intervals.iter().map(|i| i.measured).sum();
    let total_baseline: f64 = intervals.iter().map(|i| i.adjusted_baseline).sum();
    let total_savings: f64 = intervals.iter().map(|i| i.adjusted_baseline - i.measured).sum();
    let se_total = score.rmse_abs * weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let range = SavingsRange::new(total_savings, se_total, t);
    Ok(SavingsReport {
        family: score.family,
        frequency: score.frequency,
        intervals,
        total_measured,
        total_baseline,
        total_savings,
        se: score.rmse_abs,
        se_total,
        n_test: score.n_test,
        degrees_of_freedom: df,
        t_value: t,
        uncertainty: range.uncertainty,
        range_low: range.low,
        range_high: range.high,
        confidence,
        acceptable: range.acceptable,
        advisories: Vec::new(),
        adjustments: Vec::new(),
    })
}

/// Fractional uncertainty of reported savings by the ASHRAE formula
/// `t · (1.26 · CV / F) · √((n + 2) / (n · m))`, CV as a fraction. For
/// comparison only; acceptability never uses it.
pub fn ashrae_uncertainty(cv_rmse_pct: f64, fraction: f64, n: usize, m: usize, t: f64) -> Result<f64, SavingsError> {
    if fraction == 0.0 {
        return Err(SavingsError::ZeroFraction);
    }
    if !(cv_rmse_pct > 0.0 && fraction > 0.0 && n > 0 && m > 0 && t > 0.0) {
        return Err(SavingsError::Invalid("all inputs must be positive".into()));
    }
    let (n, m) = (n as f64, m as f64);
    Ok(t * (1.26 * (cv_rmse_pct / 100.0) / fraction) * ((n + 2.0) / (n * m)).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptabilityRow {
    pub frequency: Frequency,
    pub family: Family,
    pub savings: f64,
    pub se: f64,
    pub acceptable: bool,
}

impl AcceptabilityRow {
    pub fn new(frequency: Frequency, family: Family, savings: f64, se: f64) -> Self {
        AcceptabilityRow { frequency, family, savings, se, acceptable: is_acceptable(savings, se) }
    }
}

/// One row per report, ordered by frequency then family.
pub fn acceptability_table(reports: &[SavingsReport]) -> Vec<AcceptabilityRow> {
    let mut rows: Vec<AcceptabilityRow> = reports
        .iter()
        .map(|r| AcceptabilityRow::new(r.frequency, r.family, r.total_savings, r.se_total))
        .collect();
    rows.sort_by(|a, b| a.frequency.cmp(&b.frequency).then(a.family.cmp(&b.family)));
    rows
}

pub fn acceptability_csv(rows: &[AcceptabilityRow]) -> String {
    let mut out = String::from("frequency,family,savings,se,acceptable\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{}",
            r.frequency,
            r.family,
            r.savings,
            r.se,
            if r.acceptable { "Yes" } else { "No" }
        )
        .unwrap();
    }
    out
}

/// Per-model savings with error-bar bounds.
pub fn savings_ranges_csv(reports: &[SavingsReport]) -> String {
    let mut sorted: Vec<&SavingsReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.frequency.cmp(&b.frequency).then(a.family.cmp(&b.family)));
    let mut out = String::from("frequency,family,savings,range_low,range_high,se_total,t_value,acceptable\n");
    for r in sorted {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.6},{}",
            r.frequency,
            r.family,
            r.total_savings,
            r.range_low,
            r.range_high,
            r.se_total,
            r.t_value,
            if r.acceptable { "Yes" } else { "No" }
        )
        .unwrap();
    }
    out
}
