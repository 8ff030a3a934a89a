//! Seeded synthetic data: small random matrices for tests and a generated
//! facility with a known consumption model and an injected savings step.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Timelike};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{
    ingest_reader, write_csv, ChannelId, ColumnSpec, DataError, FeatureMatrix, ProjectConfig, RawDataset,
    TagManifest,
};
use crate::savings::AdjustmentRecord;
use crate::time::{parse_timestamp, DatePeriod, Frequency, Timestamp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` timestamps 15 minutes apart starting 2016-01-01.
pub fn regular_timestamps(n: usize) -> Vec<Timestamp> {
    let start = parse_timestamp("2016-01-01T00:00:00Z").expect("literal");
    (0..n).map(|i| start + Duration::minutes(15 * i as i64)).collect()
}

/// Independent standard-normal predictors `x0..` and an independent
/// standard-normal dependent `y`.
pub fn normal_matrix(features: usize, rows: usize, seed: u64) -> FeatureMatrix {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid");
    let cols = (0..features)
        .map(|j| {
            let c: Vec<f64> = (0..rows).map(|_| normal.sample(&mut r)).collect();
            (ChannelId(format!("x{j}")), c)
        })
        .collect();
    let y = (0..rows).map(|_| normal.sample(&mut r)).collect();
    FeatureMatrix::from_dense(regular_timestamps(rows), cols, "y".into(), y, Duration::minutes(15))
        .expect("consistent shape")
}

/// Parameters of a generated facility.
#[derive(Clone, Debug)]
pub struct FacilitySpec {
    pub seed: u64,
    pub baseline: DatePeriod,
    pub implementation: DatePeriod,
    pub reporting: DatePeriod,
    /// Reduction in the dependent reading per 15-minute sample after the ECM.
    pub savings_per_sample: f64,
    /// Target R² of the true relationship in the baseline period.
    pub target_r2: f64,
    /// Share of baseline predictor cells left empty.
    pub missing_rate: f64,
    /// Share of predictor cells replaced by spikes (baseline only).
    pub outlier_rate: f64,
    /// Multiplicative growth of the underlying load during reporting
    /// (a static-factor change needing a non-routine adjustment).
    pub reporting_load_growth: f64,
}

impl FacilitySpec {
    /// Nine months of baseline and seven of reporting at 15-minute spacing.
    pub fn standard(seed: u64) -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("literal date");
        FacilitySpec {
            seed,
            baseline: DatePeriod::new(d(2016, 1, 1), d(2016, 9, 30)),
            implementation: DatePeriod::new(d(2016, 10, 1), d(2016, 10, 31)),
            reporting: DatePeriod::new(d(2016, 11, 1), d(2017, 5, 31)),
            savings_per_sample: 25.0,
            target_r2: 0.65,
            missing_rate: 0.004,
            outlier_rate: 0.002,
            reporting_load_growth: 1.0,
        }
    }
}

/// Names of the generated channels: (column, equip, point, unit).
const CHANNELS: [(&str, &str, &str, &str); 10] = [
    ("oat_temp", "weather", "temp", "degC"),
    ("production", "feederq11", "elec", "kWh"),
    ("ahu04", "ahu04", "elec", "kWh"),
    ("compressor", "comp01", "air", "m3"),
    ("gas_skid", "gasskid", "gas", "kWh"),
    ("ahu04_pump", "waterroom3pumps", "elec", "kWh"),
    ("office_temp", "office", "temp", "degC"),
    ("lighting", "lighting", "elec", "kWh"),
    ("waste", "wasteplastics50", "elec", "kWh"),
    ("chw_elec", "chw", "elec", "kWh"),
];
const DEPENDENT_COLUMN: &str = "chw_elec";

/// Generated facility: baseline and reporting exports, their tag manifest,
/// a project config and the ground-truth savings.
#[derive(Clone, Debug)]
pub struct Facility {
    pub spec: FacilitySpec,
    pub config: ProjectConfig,
    pub manifest: TagManifest,
    pub baseline: RawDataset,
    pub reporting: RawDataset,
    /// Total reduction in the dependent reading over the reporting period.
    pub true_savings: f64,
    /// Noise standard deviation of the dependent reading per sample.
    pub noise_sd: f64,
}

struct Drivers {
    temp: f64,
    production: f64,
    ahu: f64,
    compressor: f64,
    gas: f64,
}

impl Drivers {
    fn load(&self) -> f64 {
        120.0 + 6.0 * self.temp + 0.6 * self.production + 2.0 * self.ahu + 0.3 * self.compressor
            + 0.5 * self.gas
    }
}

impl Facility {
    pub fn generate(spec: FacilitySpec) -> Facility {
        let mut r = rng(spec.seed);
        let unit = Normal::new(0.0, 1.0).expect("valid");
        let step = Duration::minutes(15);
        let start = spec.baseline.start_instant();
        let end = spec.reporting.end_instant();
        let n = ((end - start).num_seconds() / step.num_seconds()) as usize;

        let mut temp_ar = 0.0;
        let mut prod_ar = 0.0;
        let mut waste_walk = 0.0;
        let mut rows: Vec<(Timestamp, [f64; 9], f64)> = Vec::with_capacity(n);
        for i in 0..n {
            let ts = start + step * i as i32;
            let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
            let doy = ts.ordinal() as f64;
            let daily = (2.0 * std::f64::consts::PI * (hour - 9.0) / 24.0).sin();
            let seasonal = (2.0 * std::f64::consts::PI * (doy - 110.0) / 365.0).sin();
            temp_ar = 0.95 * temp_ar + 0.6 * unit.sample(&mut r);
            prod_ar = 0.9 * prod_ar + 6.0 * unit.sample(&mut r);
            waste_walk = 0.995 * waste_walk + unit.sample(&mut r);
            let weekday = ts.weekday().num_days_from_monday() < 5;
            let shift = if weekday && (6.0..22.0).contains(&hour) { 1.0 } else { 0.0 };
            let d = Drivers {
                temp: 11.0 + 3.0 * daily + 5.0 * seasonal + temp_ar,
                production: 300.0 + 60.0 * shift + prod_ar,
                ahu: 50.0 + 8.0 * daily + 3.0 * unit.sample(&mut r),
                compressor: 200.0 + 25.0 * unit.sample(&mut r),
                gas: 100.0 + 12.0 * unit.sample(&mut r),
            };
            let pump = 0.8 * d.ahu + 0.8 * unit.sample(&mut r);
            let office = 21.0 + 0.5 * unit.sample(&mut r);
            let lighting = 30.0 + 4.0 * unit.sample(&mut r);
            let waste = 40.0 + waste_walk;
            let load = d.load();
            rows.push((
                ts,
                [d.temp, d.production, d.ahu, d.compressor, d.gas, pump, office, lighting, waste],
                load,
            ));
        }

        // Noise sized so the true relationship explains `target_r2` of the
        // baseline variance.
        let base_loads: Vec<f64> = rows
            .iter()
            .filter(|(ts, _, _)| spec.baseline.contains(*ts))
            .map(|(_, _, l)| *l)
            .collect();
        let mean = base_loads.iter().sum::<f64>() / base_loads.len() as f64;
        let var = base_loads.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / base_loads.len() as f64;
        let noise_sd = (var * (1.0 - spec.target_r2) / spec.target_r2).sqrt();

        let mut baseline_rows = Vec::new();
        let mut reporting_rows = Vec::new();
        let mut true_savings = 0.0;
        for (ts, mut features, load) in rows {
            let noise = noise_sd * unit.sample(&mut r);
            let in_baseline = spec.baseline.contains(ts);
            let in_reporting = spec.reporting.contains(ts);
            if !in_baseline && !in_reporting {
                continue;
            }
            let mut y = load + noise;
            if in_reporting {
                y = load * spec.reporting_load_growth + noise - spec.savings_per_sample;
                true_savings += spec.savings_per_sample;
            }
            let mut cells: Vec<Option<f64>> = features.iter_mut().map(|v| Some(*v)).collect();
            for cell in cells.iter_mut() {
                let u: f64 = r.random();
                if in_baseline && u < spec.missing_rate {
                    *cell = None;
                } else if in_baseline && u < spec.missing_rate + spec.outlier_rate {
                    *cell = cell.map(|v| v * 6.0 + 500.0);
                }
            }
            // The gas skid meter drops out for a long stretch of the baseline.
            if in_baseline && ts.ordinal() >= 150 && ts.ordinal() < 172 {
                cells[4] = None;
            }
            let row = (ts, cells, Some(y));
            if in_baseline {
                baseline_rows.push(row);
            } else {
                reporting_rows.push(row);
            }
        }

        let manifest = manifest();
        let baseline = build_dataset(&baseline_rows, &manifest).expect("generated data is well formed");
        let reporting = build_dataset(&reporting_rows, &manifest).expect("generated data is well formed");
        let dependent = baseline.dependent.clone().expect("manifest names the dependent");
        let config = ProjectConfig {
            ecm_description: "Chilled water plant optimisation".into(),
            boundary_description: "Chilled water system electrical supply".into(),
            baseline_period: spec.baseline,
            implementation_period: spec.implementation,
            reporting_period: spec.reporting,
            dependent_channel_id: dependent,
            static_factors: vec![crate::data::StaticFactor {
                name: "floor area".into(),
                value: "constant".into(),
            }],
            confidence_level: crate::data::DEFAULT_CONFIDENCE,
            frequencies: Frequency::all(),
        };
        Facility {
            spec,
            config,
            manifest,
            baseline,
            reporting,
            true_savings,
            noise_sd,
        }
    }

    /// Adjustment records that undo `reporting_load_growth`.
    pub fn adjustments(&self) -> Vec<AdjustmentRecord> {
        if self.spec.reporting_load_growth == 1.0 {
            return Vec::new();
        }
        vec![AdjustmentRecord {
            name: "production area expansion".into(),
            period: self.spec.reporting,
            factor: self.spec.reporting_load_growth,
            justification: "cooled floor area increased".into(),
            stakeholders: "facility owner; ESCO".into(),
        }]
    }

    /// Write `config.toml`, `manifest.toml`, `baseline.csv` and `reporting.csv`.
    pub fn write_files(&self, dir: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        let write = |name: &str, text: &str| -> Result<(), DataError> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| DataError::io(&p, e))
        };
        write("config.toml", &self.config.to_toml_string())?;
        write("manifest.toml", &self.manifest.to_toml_string())?;
        for (name, ds) in [("baseline.csv", &self.baseline), ("reporting.csv", &self.reporting)] {
            let p = dir.join(name);
            let f = std::fs::File::create(&p).map_err(|e| DataError::io(&p, e))?;
            write_csv(ds, std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}

fn manifest() -> TagManifest {
    let columns = CHANNELS
        .iter()
        .map(|(col, equip, point, unit)| {
            let mut tags = BTreeMap::new();
            tags.insert("site".to_string(), "plantA".to_string());
            tags.insert("equip".to_string(), equip.to_string());
            tags.insert("point".to_string(), point.to_string());
            tags.insert("his".to_string(), "m:".to_string());
            (col.to_string(), ColumnSpec { unit: unit.to_string(), tags })
        })
        .collect();
    TagManifest { dependent: Some(DEPENDENT_COLUMN.to_string()), columns }
}

type Row = (Timestamp, Vec<Option<f64>>, Option<f64>);

fn build_dataset(rows: &[Row], manifest: &TagManifest) -> Result<RawDataset, DataError> {
    // Go through the CSV path so generated data is ingested exactly like a real export.
    let mut text = String::from("timestamp");
    for (col, ..) in CHANNELS {
        text.push(',');
        text.push_str(col);
    }
    text.push('\n');
    for (ts, cells, y) in rows {
        text.push_str(&crate::time::format_timestamp(*ts));
        for c in cells.iter().chain(std::iter::once(y)) {
            text.push(',');
            if let Some(v) = c {
                text.push_str(&v.to_string());
            }
        }
        text.push('\n');
    }
    ingest_reader(text.as_bytes(), manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_matrix_is_seeded() {
        assert_eq!(normal_matrix(2, 10, 1), normal_matrix(2, 10, 1));
        assert_ne!(normal_matrix(2, 10, 1), normal_matrix(2, 10, 2));
    }

    #[test]
    fn short_facility_has_expected_shape() {
        let mut spec = FacilitySpec::standard(3);
        let d = |m, day| NaiveDate::from_ymd_opt(2016, m, day).unwrap();
        spec.baseline = DatePeriod::new(d(1, 1), d(1, 7));
        spec.implementation = DatePeriod::new(d(1, 8), d(1, 8));
        spec.reporting = DatePeriod::new(d(1, 9), d(1, 10));
        let f = Facility::generate(spec);
        assert_eq!(f.baseline.channels.len(), 10);
        assert_eq!(f.baseline.channels[0].series.len(), 7 * 96);
        assert_eq!(f.reporting.channels[0].series.len(), 2 * 96);
        assert!((f.true_savings - 25.0 * 192.0).abs() < 1e-9);
        f.config.validate().unwrap();
        f.config.validate_against(&f.baseline).unwrap();
    }
}
