//! The baseline and reporting stages, end to end.

use std::fmt;

use crate::data::{align, ChannelId, FeatureMatrix, ProjectConfig, RawDataset};
use crate::evaluation::{evaluate_all, select_best, ModelScore};
use crate::models::{Family, HyperGrid, TrainedModel, TrainingFailure, train_all};
use crate::preprocess::{aggregate, split, SplitDataset, TRAIN_RATIO};
use crate::quality::{assess, clean, omit_poor_features, AvailabilitySummary, OMISSION_THRESHOLD};
use crate::savings::{
    adjusted_baseline, apply_adjustments, gate_against_ranges, quantify_weighted, validate_adjustments,
    AdjustmentRecord, RangeGateResult, SavingsReport,
};
use crate::selection::{rank_variables, select_from_ranking, CorrelationReport, FeatureSubset};
use crate::time::{Frequency, Timestamp};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Alignment,
    Selection,
    Availability,
    Cleaning,
    Aggregation,
    Training,
    Evaluation,
    Reporting,
}

impl Stage {
    fn hint(self) -> &'static str {
        match self {
            Stage::Alignment => "check the period dates and that the dependent channel has readings in them",
            Stage::Selection => "check that candidate features vary and relate to the dependent variable",
            Stage::Availability => "each feature needs at least four readings in the baseline period",
            Stage::Cleaning => "too much data was missing or anomalous; extend the baseline period or repair the meters",
            Stage::Aggregation => "a modelling frequency is finer than the data or leaves too few rows",
            Stage::Training => "no model could be trained; inspect the per-candidate failures",
            Stage::Evaluation => "held-out data could not be scored",
            Stage::Reporting => "check the reporting data covers the model's features and the adjustment periods",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Alignment => "alignment",
            Stage::Selection => "feature selection",
            Stage::Availability => "availability assessment",
            Stage::Cleaning => "cleaning",
            Stage::Aggregation => "aggregation",
            Stage::Training => "training",
            Stage::Evaluation => "evaluation",
            Stage::Reporting => "reporting",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {source} (hint: {})", stage.hint())]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

fn at<E: Into<Error>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError { stage, source: e.into() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOptions {
    pub seed: u64,
    pub frequencies: Vec<Frequency>,
    pub families: Vec<Family>,
    pub grid: HyperGrid,
    pub train_ratio: f64,
    pub omission_threshold: f64,
}

impl BaselineOptions {
    pub fn new(seed: u64, frequencies: Vec<Frequency>) -> Self {
        BaselineOptions {
            seed,
            frequencies,
            families: Family::ALL.to_vec(),
            grid: HyperGrid::default(),
            train_ratio: TRAIN_RATIO,
            omission_threshold: OMISSION_THRESHOLD,
        }
    }
}

/// One pass of ranking, selection and availability assessment.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionRound {
    pub correlation: CorrelationReport,
    pub subset: FeatureSubset,
    pub availability: AvailabilitySummary,
    pub omitted: Vec<ChannelId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRun {
    pub rounds: Vec<SelectionRound>,
    pub features: Vec<ChannelId>,
    pub availability: AvailabilitySummary,
    pub dropped_rows: Vec<Timestamp>,
    pub cleaned_rows: usize,
    pub splits: Vec<(Frequency, SplitDataset)>,
    /// Models and their scores, index-aligned.
    pub models: Vec<TrainedModel>,
    pub scores: Vec<ModelScore>,
    pub best: usize,
    pub failures: Vec<TrainingFailure>,
    pub advisories: Vec<String>,
}

impl BaselineRun {
    pub fn best_model(&self) -> (&TrainedModel, &ModelScore) {
        (&self.models[self.best], &self.scores[self.best])
    }
}

/// Select features, assess and clean, then train and score one model per
/// (frequency, family).
pub fn run_baseline(
    dataset: &RawDataset,
    config: &ProjectConfig,
    options: &BaselineOptions,
) -> Result<BaselineRun, PipelineError> {
    config.validate_against(dataset).map_err(at(Stage::Alignment))?;
    let dataset = dataset.clone().with_dependent(config.dependent_channel_id.clone()).map_err(at(Stage::Alignment))?;
    let aligned = align(&dataset, &config.baseline_period).map_err(at(Stage::Alignment))?;
    let dependent = aligned.dependent_id().clone();
    let mut advisories = Vec::new();

    let mut candidates = aligned.clone();
    let mut rounds = Vec::new();
    loop {
        let correlation = rank_variables(&candidates).map_err(at(Stage::Selection))?;
        let subset = select_from_ranking(&candidates, &correlation).map_err(at(Stage::Selection))?;
        let mut ids = subset.selected.clone();
        ids.push(dependent.clone());
        let availability = assess(&candidates, &ids).map_err(at(Stage::Availability))?;
        let omitted: Vec<ChannelId> = omit_poor_features(&availability, options.omission_threshold)
            .into_iter()
            .filter(|id| id != &dependent)
            .collect();
        let done = omitted.is_empty();
        candidates = candidates.without_features(&omitted);
        rounds.push(SelectionRound { correlation, subset, availability, omitted });
        if done {
            break;
        }
    }
    let last = rounds.last().expect("at least one round");
    let features = last.subset.selected.clone();
    let availability = last.availability.clone();
    if let Some(dep) = availability.get(&dependent) {
        if dep.poor_quality_fraction > options.omission_threshold {
            advisories.push(format!(
                "dependent `{dependent}` has {:.1}% poor-quality data",
                100.0 * dep.poor_quality_fraction
            ));
        }
    }

    let selected = aligned.select_features(&features).map_err(at(Stage::Cleaning))?;
    let cleaned = clean(&selected, &availability).map_err(at(Stage::Cleaning))?;

    let mut splits = Vec::new();
    let mut failures = Vec::new();
    for &frequency in &options.frequencies {
        let prepared = aggregate(&cleaned.matrix, frequency)
            .map_err(Error::from)
            .and_then(|ds| split(&ds.matrix, options.train_ratio, options.seed).map_err(Error::from));
        match prepared {
            Ok(s) => splits.push((frequency, s)),
            Err(e) => {
                for &family in &options.families {
                    failures.push(TrainingFailure { frequency, family, message: e.to_string() });
                }
            }
        }
    }

    let trained = train_all(&splits, &options.families, &options.grid);
    failures.extend(trained.failures);
    for f in &failures {
        advisories.push(format!("{} {} not trained: {}", f.frequency, f.family, f.message));
    }
    if trained.models.is_empty() {
        return Err(PipelineError {
            stage: Stage::Training,
            source: crate::models::ModelError::InvalidParameter(format!("{} failures", failures.len())).into(),
        });
    }
    let tests: Vec<(Frequency, FeatureMatrix)> = splits.iter().map(|(f, s)| (*f, s.test.clone())).collect();
    let scores = evaluate_all(&trained.models, &tests).map_err(at(Stage::Evaluation))?;
    let winner = select_best(&scores).expect("non-empty");
    let best = scores.iter().position(|s| std::ptr::eq(s, winner)).expect("from the list");

    Ok(BaselineRun {
        rounds,
        features,
        availability,
        cleaned_rows: cleaned.matrix.n_rows(),
        dropped_rows: cleaned.dropped,
        splits,
        models: trained.models,
        scores,
        best,
        failures,
        advisories,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelReport {
    pub report: SavingsReport,
    pub gate: RangeGateResult,
}

/// Native grid slots of `[start, start + frequency)` inside `[lo, hi)`.
fn interval_weight(start: Timestamp, frequency: Frequency, lo: Timestamp, hi: Timestamp, spacing: chrono::Duration) -> f64 {
    let a = start.max(lo);
    let b = (start + frequency.duration()).min(hi);
    if b <= a {
        return 0.0;
    }
    ((b - a).num_seconds() as f64 / spacing.num_seconds() as f64).ceil()
}

/// Apply one persisted model to the reporting period and quantify savings.
pub fn report_model(
    model: &TrainedModel,
    score: &ModelScore,
    reporting: &RawDataset,
    config: &ProjectConfig,
    adjustments: &[AdjustmentRecord],
    confidence: f64,
) -> Result<ModelReport, PipelineError> {
    let stage = Stage::Reporting;
    validate_adjustments(adjustments, &config.reporting_period).map_err(at(stage))?;
    let dataset = reporting.clone().with_dependent(config.dependent_channel_id.clone()).map_err(at(stage))?;
    let aligned = align(&dataset, &config.reporting_period).map_err(at(stage))?;
    let selected = aligned.select_features(&model.features).map_err(at(stage))?;
    let complete = selected.complete_rows(&model.features).map_err(at(stage))?;
    let mut advisories = Vec::new();
    let incomplete = selected.n_rows() - complete.len();
    if incomplete > 0 {
        advisories.push(format!("{incomplete} reporting rows with missing feature readings were excluded"));
    }
    let usable = selected.select_rows(&complete);
    let agg = aggregate(&usable, model.frequency).map_err(at(stage))?;
    let matrix = agg.matrix;

    let gate = gate_against_ranges(&matrix, &model.feature_ranges);
    advisories.extend(gate.advisories.iter().cloned());

    let baseline = adjusted_baseline(model, &matrix).map_err(at(stage))?;
    let (baseline, audit) = apply_adjustments(matrix.timestamps(), &baseline, adjustments).map_err(at(stage))?;
    let lo = config.reporting_period.start_instant();
    let hi = config.reporting_period.end_instant();
    let weights: Vec<f64> = matrix
        .timestamps()
        .iter()
        .map(|t| interval_weight(*t, model.frequency, lo, hi, aligned.spacing()))
        .collect();
    let mut report = quantify_weighted(matrix.timestamps(), matrix.dependent(), &baseline, &weights, score, confidence)
        .map_err(at(stage))?;
    report.advisories = advisories;
    report.adjustments = audit;
    Ok(ModelReport { report, gate })
}
