use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mandv_core::data::{align, ingest_csv, ProjectConfig, RawDataset};
use mandv_core::evaluation::{required_cvrmse_curve, score_table_csv};
use mandv_core::pipeline::{report_model, run_baseline, BaselineOptions, BaselineRun};
use mandv_core::quality::assess;
use mandv_core::savings::{
    acceptability_csv, acceptability_table, load_adjustments, savings_ranges_csv, t_value, AcceptabilityRow,
    SavingsReport,
};
use mandv_core::selection::{rank_variables, select_from_ranking};
use mandv_core::time::Frequency;
use mandv_core::{Family, HyperGrid, ModelScore, TrainedModel};
use serde::{Deserialize, Serialize};

use crate::manifest::{FileHash, RunManifest, StageRecord, StageWriter};
use crate::{
    AcceptabilityArgs, BaselineArgs, CliError, Command, DataArgs, IngestArgs, ReportArgs, RequiredArgs, StageArgs,
};

/// A persisted model with its held-out score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistedModel {
    pub winner: bool,
    pub score: ModelScore,
    pub model: TrainedModel,
}

impl PersistedModel {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::ModelFile { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises") + "\n"
    }
}

/// What a command produced, for the terminal.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: String,
    /// Warnings that never affect the exit status.
    pub advisories: Vec<String>,
}

pub fn run(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::SelectFeatures(a) => select_features(a),
        Command::Assess(a) => assess_stage(a),
        Command::Baseline(a) => baseline(a),
        Command::Report(a) => report(a),
        Command::Acceptability(a) => acceptability(a),
        Command::RequiredPerformance(a) => required_performance(a),
    }
}

fn load_config(path: &Path) -> Result<ProjectConfig, CliError> {
    Ok(ProjectConfig::load(path).map_err(mandv_core::Error::from)?)
}

fn load_data(data: &DataArgs) -> Result<(RawDataset, Vec<FileHash>), CliError> {
    match (&data.dataset, &data.csv, &data.manifest) {
        (Some(path), _, _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let ds = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: not a stored dataset: {e}", path.display())))?;
            Ok((ds, vec![FileHash::of_bytes(path.display().to_string(), text.as_bytes())]))
        }
        (None, Some(csv), Some(manifest)) => {
            let ds = ingest_csv(csv, manifest).map_err(mandv_core::Error::from)?;
            Ok((ds, vec![FileHash::of_file(csv)?, FileHash::of_file(manifest)?]))
        }
        _ => Err(CliError::Input("give either --dataset or both --csv and --manifest".into())),
    }
}

fn finish_stage(
    out: &Path,
    stage: &str,
    config: Option<&Path>,
    seed: Option<u64>,
    mut inputs: Vec<FileHash>,
    writer: StageWriter,
    update: impl FnOnce(&mut RunManifest),
) -> Result<(), CliError> {
    let mut manifest = RunManifest::load_or_new(out)?;
    if let Some(c) = config {
        inputs.insert(0, FileHash::of_file(c)?);
        manifest.config = Some(c.display().to_string());
    }
    if seed.is_some() {
        manifest.seed = seed;
    }
    manifest.record(StageRecord { stage: stage.into(), inputs, outputs: writer.finish() });
    update(&mut manifest);
    manifest.save(out)
}

fn ingest(a: &IngestArgs) -> Result<Outcome, CliError> {
    let config = load_config(&a.common.config)?;
    let dataset = ingest_csv(&a.csv, &a.manifest).map_err(mandv_core::Error::from)?;
    config.validate_against(&dataset).map_err(mandv_core::Error::from)?;

    let mut summary = String::new();
    writeln!(summary, "{} channels, native spacing {} s", dataset.channels.len(), dataset.native_frequency.num_seconds())
        .unwrap();
    writeln!(summary, "id,column,unit,readings,dependent").unwrap();
    for ch in &dataset.channels {
        let dep = Some(&ch.id) == Some(&config.dependent_channel_id);
        writeln!(summary, "{},{},{},{},{}", ch.id, ch.column, ch.unit, ch.present_count(), dep).unwrap();
    }
    let mut w = StageWriter::new(&a.common.out)?;
    let json = serde_json::to_string(&dataset).expect("dataset serialises") + "\n";
    w.write(&format!("{}.json", a.name), &json)?;
    w.write(&format!("{}-channels.csv", a.name), &summary)?;
    let inputs = vec![FileHash::of_file(&a.csv)?, FileHash::of_file(&a.manifest)?];
    finish_stage(&a.common.out, &format!("ingest:{}", a.name), Some(&a.common.config), None, inputs, w, |_| {})?;
    Ok(Outcome { summary, advisories: Vec::new() })
}

fn baseline_matrix(a: &StageArgs) -> Result<(ProjectConfig, mandv_core::FeatureMatrix, Vec<FileHash>), CliError> {
    let config = load_config(&a.common.config)?;
    let (dataset, inputs) = load_data(&a.data)?;
    config.validate_against(&dataset).map_err(mandv_core::Error::from)?;
    let dataset = dataset
        .with_dependent(config.dependent_channel_id.clone())
        .map_err(mandv_core::Error::from)?;
    let matrix = align(&dataset, &config.baseline_period).map_err(mandv_core::Error::from)?;
    Ok((config, matrix, inputs))
}

fn select_features(a: &StageArgs) -> Result<Outcome, CliError> {
    let (_, matrix, inputs) = baseline_matrix(a)?;
    let ranking = rank_variables(&matrix).map_err(mandv_core::Error::from)?;
    let subset = select_from_ranking(&matrix, &ranking).map_err(mandv_core::Error::from)?;
    let mut w = StageWriter::new(&a.common.out)?;
    w.write("correlation.csv", &ranking.to_text())?;
    w.write("selection.csv", &subset.to_text())?;
    finish_stage(&a.common.out, "select-features", Some(&a.common.config), None, inputs, w, |_| {})?;
    let mut summary = format!("{} candidates ranked, {} selected\n", ranking.ranked.len(), subset.selected.len());
    for id in &subset.selected {
        writeln!(summary, "  {id}").unwrap();
    }
    Ok(Outcome { summary, advisories: Vec::new() })
}

fn assess_stage(a: &StageArgs) -> Result<Outcome, CliError> {
    let (_, matrix, inputs) = baseline_matrix(a)?;
    let ranking = rank_variables(&matrix).map_err(mandv_core::Error::from)?;
    let subset = select_from_ranking(&matrix, &ranking).map_err(mandv_core::Error::from)?;
    let mut ids = subset.selected.clone();
    ids.push(matrix.dependent_id().clone());
    let summary = assess(&matrix, &ids).map_err(mandv_core::Error::from)?;
    let omitted = mandv_core::quality::omit_poor_features(&summary, mandv_core::quality::OMISSION_THRESHOLD);
    let mut w = StageWriter::new(&a.common.out)?;
    w.write("availability.txt", &summary.to_text())?;
    w.write("boxplot.csv", &summary.boxplot_csv())?;
    w.write("outliers.csv", &summary.outliers_csv())?;
    finish_stage(&a.common.out, "assess", Some(&a.common.config), None, inputs, w, |_| {})?;
    let advisories = omitted
        .iter()
        .map(|id| format!("{id} exceeds the poor-quality threshold and would be omitted"))
        .collect();
    Ok(Outcome { summary: summary.to_text(), advisories })
}

fn parse_list<T: std::str::FromStr>(values: &[String], what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    values
        .iter()
        .map(|v| v.parse::<T>().map_err(|e| CliError::Input(format!("{what}: {e}"))))
        .collect()
}

pub fn model_path(model: &TrainedModel) -> String {
    format!("models/{}", model.file_name())
}

fn baseline_summary(run: &BaselineRun) -> String {
    let mut s = String::new();
    let (model, score) = run.best_model();
    writeln!(s, "features: {}", run.features.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(", ")).unwrap();
    writeln!(s, "selection rounds: {}", run.rounds.len()).unwrap();
    for (i, r) in run.rounds.iter().enumerate() {
        if !r.omitted.is_empty() {
            let names: Vec<&str> = r.omitted.iter().map(|f| f.as_str()).collect();
            writeln!(s, "  round {} omitted: {}", i + 1, names.join(", ")).unwrap();
        }
    }
    writeln!(s, "rows kept after cleaning: {} (dropped {})", run.cleaned_rows, run.dropped_rows.len()).unwrap();
    writeln!(s, "models trained: {}", run.models.len()).unwrap();
    writeln!(
        s,
        "winner: {} {} ({:?}), CV(RMSE) {:.3}%, NMBE {:.3}%",
        score.frequency, score.family, model.params, score.cv_rmse_pct, score.nmbe_pct
    )
    .unwrap();
    s
}

fn baseline(a: &BaselineArgs) -> Result<Outcome, CliError> {
    let config = load_config(&a.common.config)?;
    let (dataset, mut inputs) = load_data(&a.data)?;
    let frequencies = match &a.frequencies {
        Some(list) => {
            let mut f: Vec<Frequency> = parse_list(list, "frequency")?;
            f.sort();
            f.dedup();
            f
        }
        None => config.frequencies.clone(),
    };
    let mut options = BaselineOptions::new(a.seed, frequencies);
    if let Some(list) = &a.families {
        let mut fams: Vec<Family> = parse_list(list, "family")?;
        fams.sort();
        fams.dedup();
        options.families = fams;
    }
    if let Some(path) = &a.grid {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        options.grid = HyperGrid::from_toml_str(&text).map_err(mandv_core::Error::from)?;
        inputs.push(FileHash::of_bytes(path.display().to_string(), text.as_bytes()));
    }
    let run = run_baseline(&dataset, &config, &options)?;

    let mut w = StageWriter::new(&a.common.out)?;
    let last = run.rounds.last().expect("at least one round");
    w.write("correlation.csv", &last.correlation.to_text())?;
    w.write("selection.csv", &last.subset.to_text())?;
    w.write("availability.txt", &run.availability.to_text())?;
    w.write("boxplot.csv", &run.availability.boxplot_csv())?;
    w.write("outliers.csv", &run.availability.outliers_csv())?;
    w.write("scores.csv", &score_table_csv(&run.scores))?;
    let mut winner = None;
    for (i, (model, score)) in run.models.iter().zip(&run.scores).enumerate() {
        let persisted = PersistedModel { winner: i == run.best, score: score.clone(), model: model.clone() };
        let rel = model_path(model);
        w.write(&rel, &persisted.to_json())?;
        if i == run.best {
            winner = Some(rel);
        }
    }
    let mut summary = baseline_summary(&run);
    let mut notes = String::new();
    for adv in &run.advisories {
        writeln!(notes, "{adv}").unwrap();
    }
    summary.push_str(&score_table_csv(&run.scores));
    w.write("baseline.txt", &format!("{summary}{notes}"))?;
    finish_stage(&a.common.out, "baseline", Some(&a.common.config), Some(a.seed), inputs, w, |m| {
        m.winner = winner;
    })?;
    Ok(Outcome { summary, advisories: run.advisories })
}

/// Persisted model paths recorded by the baseline stage, winner first.
fn recorded_models(manifest: &RunManifest) -> Vec<String> {
    let mut paths: Vec<String> = manifest
        .stage("baseline")
        .map(|s| s.outputs.iter().filter(|o| o.path.starts_with("models/")).map(|o| o.path.clone()).collect())
        .unwrap_or_default();
    if let Some(w) = &manifest.winner {
        paths.retain(|p| p != w);
        paths.insert(0, w.clone());
    }
    paths
}

fn report(a: &ReportArgs) -> Result<Outcome, CliError> {
    let out = &a.common.out;
    let manifest = RunManifest::load_or_new(out)?;
    let winner = manifest.winner.clone().ok_or_else(|| CliError::NoWinner(RunManifest::path(out)))?;
    let config = load_config(&a.common.config)?;
    let (reporting, mut inputs) = load_data(&a.data)?;
    let adjustments = match &a.adjustments {
        Some(path) => {
            inputs.push(FileHash::of_file(path)?);
            load_adjustments(path).map_err(mandv_core::Error::from)?
        }
        None => Vec::new(),
    };
    let confidence = a.confidence.unwrap_or(config.confidence_level);

    let primary_path = match &a.model {
        Some(p) => p.clone(),
        None => out.join(&winner),
    };
    let primary = PersistedModel::load(&primary_path)?;
    inputs.push(FileHash::of_file(&primary_path)?);
    let main = report_model(&primary.model, &primary.score, &reporting, &config, &adjustments, confidence)?;

    let mut advisories = main.report.advisories.clone();
    let mut reports: Vec<SavingsReport> = vec![main.report.clone()];
    if a.all_models {
        for rel in recorded_models(&manifest) {
            let path = out.join(&rel);
            if path == primary_path {
                continue;
            }
            let other = PersistedModel::load(&path)?;
            match report_model(&other.model, &other.score, &reporting, &config, &adjustments, confidence) {
                Ok(r) => reports.push(r.report),
                Err(e) => advisories.push(format!("{rel} could not be applied: {e}")),
            }
        }
    }

    let mut text = main.report.to_text();
    if !main.gate.all_within() {
        writeln!(text, "range check: some reporting features are outside the training range").unwrap();
    }
    let mut w = StageWriter::new(out)?;
    w.write("report.txt", &text)?;
    w.write("savings_timeseries.csv", &main.report.timeseries_csv())?;
    w.write("savings_ranges.csv", &savings_ranges_csv(&reports))?;
    w.write("acceptability.csv", &acceptability_csv(&acceptability_table(&reports)))?;
    let report_json = serde_json::to_string_pretty(&main.report).expect("report serialises") + "\n";
    w.write("report.json", &report_json)?;
    finish_stage(out, "report", Some(&a.common.config), None, inputs, w, |_| {})?;
    Ok(Outcome { summary: text, advisories })
}

/// Parse `frequency,family,savings,se` rows.
pub fn read_pairs(text: &str) -> Result<Vec<AcceptabilityRow>, CliError> {
    let mut rows = Vec::new();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| CliError::Input("empty acceptability input".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != ["frequency", "family", "savings", "se"] {
        return Err(CliError::Input(format!("expected header `frequency,family,savings,se`, got `{header}`")));
    }
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || CliError::Input(format!("line {}: `{line}`", i + 2));
        if cells.len() != 4 {
            return Err(bad());
        }
        let frequency: Frequency = cells[0].parse().map_err(|e| CliError::Input(format!("line {}: {e}", i + 2)))?;
        let family: Family = cells[1].parse().map_err(|e: String| CliError::Input(format!("line {}: {e}", i + 2)))?;
        let savings: f64 = cells[2].parse().map_err(|_| bad())?;
        let se: f64 = cells[3].parse().map_err(|_| bad())?;
        rows.push(AcceptabilityRow::new(frequency, family, savings, se));
    }
    Ok(rows)
}

fn acceptability(a: &AcceptabilityArgs) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let rows = read_pairs(&text)?;
    let csv = acceptability_csv(&rows);
    let mut w = StageWriter::new(&a.out)?;
    w.write("acceptability.csv", &csv)?;
    let inputs = vec![FileHash::of_bytes(a.input.display().to_string(), text.as_bytes())];
    finish_stage(&a.out, "acceptability", None, None, inputs, w, |_| {})?;
    let yes = rows.iter().filter(|r| r.acceptable).count();
    Ok(Outcome { summary: format!("{csv}{yes} of {} acceptable\n", rows.len()), advisories: Vec::new() })
}

fn required_performance(a: &RequiredArgs) -> Result<Outcome, CliError> {
    if a.n_test < 2 || a.intervals == 0 {
        return Err(CliError::Input("--n-test must be at least 2 and --intervals positive".into()));
    }
    let fractions = a
        .fractions
        .clone()
        .unwrap_or_else(|| (1..=30).map(|i| f64::from(i) / 100.0).collect());
    let t = t_value(a.confidence, (a.n_test - 1) as f64).map_err(mandv_core::Error::from)?;
    let curve = required_cvrmse_curve(&fractions, t, a.n_test, a.intervals);
    let mut csv = String::from("fractional_savings,max_cv_rmse_pct\n");
    for p in &curve {
        writeln!(csv, "{},{:.6}", p.fractional_savings, p.max_cv_rmse_pct).unwrap();
    }
    let mut w = StageWriter::new(&a.out)?;
    w.write("required_performance.csv", &csv)?;
    finish_stage(&a.out, "required-performance", None, None, Vec::new(), w, |_| {})?;
    Ok(Outcome { summary: csv, advisories: Vec::new() })
}
