use chrono::NaiveDate;
use mandv_core::data::{ingest_csv, ProjectConfig};
use mandv_core::pipeline::{report_model, run_baseline, BaselineOptions};
use mandv_core::synthetic::{Facility, FacilitySpec};
use mandv_core::{DatePeriod, Frequency, HyperGrid, TrainedModel};

const GRID: &str = "knn_k = [5]\nknn_order = [2]\nann_hidden = [2]\nann_decay = [0.01]\nsvm_cost = [0.5]\nfolds = 3\n";

fn short_facility(seed: u64) -> Facility {
    let mut spec = FacilitySpec::standard(seed);
    let d = |m, day| NaiveDate::from_ymd_opt(2016, m, day).unwrap();
    spec.baseline = DatePeriod::new(d(3, 1), d(3, 28));
    spec.implementation = DatePeriod::new(d(3, 29), d(3, 31));
    spec.reporting = DatePeriod::new(d(4, 1), d(4, 10));
    Facility::generate(spec)
}

fn options(seed: u64) -> BaselineOptions {
    let mut o = BaselineOptions::new(seed, vec![Frequency::FifteenMinute, Frequency::Hourly, Frequency::Daily]);
    o.grid = HyperGrid::from_toml_str(GRID).unwrap();
    o
}

#[test]
fn files_round_trip_through_ingest() {
    let facility = short_facility(1);
    let dir = tempfile::tempdir().unwrap();
    facility.write_files(dir.path()).unwrap();
    let config = ProjectConfig::load(&dir.path().join("config.toml")).unwrap();
    let baseline = ingest_csv(&dir.path().join("baseline.csv"), &dir.path().join("manifest.toml")).unwrap();
    assert_eq!(config, facility.config);
    assert_eq!(baseline.channels.len(), facility.baseline.channels.len());
    for (a, b) in baseline.channels.iter().zip(&facility.baseline.channels) {
        assert_eq!(a.series, b.series);
    }
}

#[test]
fn baseline_trains_every_model_and_picks_the_lowest_cv() {
    let facility = short_facility(2);
    let run = run_baseline(&facility.baseline, &facility.config, &options(2)).unwrap();
    assert_eq!(run.models.len(), 12, "failures: {:?}", run.failures);
    assert!(!run.features.is_empty());
    let (_, best) = run.best_model();
    assert!(run.scores.iter().all(|s| s.cv_rmse_pct >= best.cv_rmse_pct));
    assert_eq!(run.cleaned_rows + run.dropped_rows.len(), 28 * 96);
}

#[test]
fn reruns_are_identical() {
    let facility = short_facility(3);
    let a = run_baseline(&facility.baseline, &facility.config, &options(3)).unwrap();
    let b = run_baseline(&facility.baseline, &facility.config, &options(3)).unwrap();
    assert_eq!(a.scores, b.scores);
    assert_eq!(a.models, b.models);
}

#[test]
fn report_recovers_a_positive_saving() {
    let facility = short_facility(4);
    let run = run_baseline(&facility.baseline, &facility.config, &options(4)).unwrap();
    let (model, score) = run.best_model();
    let out = report_model(model, score, &facility.reporting, &facility.config, &[], 0.95).unwrap();
    let r = out.report;
    assert!(r.total_savings > 0.0);
    assert!((r.total_savings - (r.total_baseline - r.total_measured)).abs() < 1e-6 * r.total_baseline.abs());
    assert!((r.range_high - r.range_low - 2.0 * r.uncertainty).abs() < 1e-6);
    assert_eq!(r.acceptable, r.total_savings > 2.0 * r.se_total);
    assert!(facility.true_savings > 0.0);
}

#[test]
fn persisted_models_predict_identically() {
    let facility = short_facility(5);
    let run = run_baseline(&facility.baseline, &facility.config, &options(5)).unwrap();
    for (model, (_, split)) in run.models.iter().zip(run.splits.iter().flat_map(|s| std::iter::repeat(s).take(4))) {
        let restored = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
        let a = model.predict(&split.test).unwrap();
        let b = restored.predict(&split.test).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
