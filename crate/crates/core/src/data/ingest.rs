use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{apply_tags, DataError, RawDataset, TagSet, TaggedChannel};
use crate::time::{format_timestamp, parse_timestamp, Timestamp};

/// Tags and unit for one CSV column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub unit: String,
    #[serde(flatten)]
    pub tags: TagSet,
}

/// Maps CSV column names to Haystack tags, kept apart from the raw export.
///
/// ```toml
/// dependent = "CHW kWh"
///
/// [columns."CHW kWh"]
/// site = "plantA"
/// equip = "chw"
/// point = "elec"
/// unit = "kWh"
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TagManifest {
    /// Column holding the dependent variable, if the manifest designates one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependent: Option<String>,
    pub columns: BTreeMap<String, ColumnSpec>,
}

impl TagManifest {
    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::Manifest(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest is serialisable")
    }
}

pub fn ingest_csv(path: &Path, tag_manifest: &Path) -> Result<RawDataset, DataError> {
    let manifest = TagManifest::load(tag_manifest)?;
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    ingest_reader(std::io::BufReader::new(file), &manifest)
}

fn parse_cell(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Read a `timestamp,<channel>...` CSV. Unparseable cells become missing.
pub fn ingest_reader<R: Read>(reader: R, manifest: &TagManifest) -> Result<RawDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::Headers).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    let first = headers.get(0).unwrap_or("").to_string();
    if !first.eq_ignore_ascii_case("timestamp") {
        return Err(DataError::MissingTimestampColumn(first));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    for name in manifest.columns.keys() {
        if !columns.contains(name) {
            return Err(DataError::ManifestColumnAbsent(name.clone()));
        }
    }
    if let Some(dep) = &manifest.dependent {
        if !columns.contains(dep) {
            return Err(DataError::ManifestColumnAbsent(dep.clone()));
        }
    }
    for name in &columns {
        if !manifest.columns.contains_key(name) {
            return Err(DataError::UntaggedColumn(name.clone()));
        }
    }

    let mut rows: Vec<(Timestamp, Vec<Option<f64>>)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let raw_ts = record.get(0).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| DataError::BadTimestamp {
            line: i + 2,
            value: raw_ts.to_string(),
        })?;
        let values = (1..=columns.len())
            .map(|c| record.get(c).and_then(parse_cell))
            .collect();
        rows.push((ts, values));
    }
    rows.sort_by_key(|(ts, _)| *ts);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(DataError::DuplicateTimestamp {
                column: "timestamp".into(),
                timestamp: pair[1].0,
            });
        }
    }
    if rows.len() < 2 {
        return Err(DataError::TooFewRows);
    }
    let native = rows
        .windows(2)
        .map(|p| p[1].0 - p[0].0)
        .min()
        .expect("at least one gap");

    let mut channels = Vec::with_capacity(columns.len());
    let mut dependent = None;
    for (c, name) in columns.iter().enumerate() {
        let series = rows.iter().map(|(ts, vals)| (*ts, vals[c])).collect();
        let spec = &manifest.columns[name];
        let channel = TaggedChannel::untagged(name.clone(), spec.unit.clone(), series)?;
        let channel = apply_tags(channel, &spec.tags)?;
        if manifest.dependent.as_deref() == Some(name.as_str()) {
            dependent = Some(channel.id.clone());
        }
        channels.push(channel);
    }
    RawDataset::new(channels, native, dependent)
}

/// Write channels back out in ingestion layout, using their source column
/// names. Values use the shortest representation that round-trips exactly;
/// missing cells are empty.
pub fn write_csv<W: Write>(dataset: &RawDataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(dataset.channels.iter().map(|c| c.column.clone()));
    w.write_record(&header).map_err(|e| DataError::Csv(e.to_string()))?;

    let mut stamps: Vec<Timestamp> = dataset
        .channels
        .iter()
        .flat_map(|c| c.series.iter().map(|(t, _)| *t))
        .collect();
    stamps.sort();
    stamps.dedup();
    let mut cursors = vec![0usize; dataset.channels.len()];
    for ts in stamps {
        let mut record = vec![format_timestamp(ts)];
        for (ch, cur) in dataset.channels.iter().zip(cursors.iter_mut()) {
            let cell = match ch.series.get(*cur) {
                Some((t, v)) if *t == ts => {
                    *cur += 1;
                    v.map(|x| x.to_string()).unwrap_or_default()
                }
                _ => String::new(),
            };
            record.push(cell);
        }
        w.write_record(&record).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn manifest(cols: &[&str], dependent: Option<&str>) -> TagManifest {
        let columns = cols
            .iter()
            .map(|c| {
                let mut tags = TagSet::new();
                tags.insert("site".into(), "plantA".into());
                tags.insert("equip".into(), c.split('-').next().unwrap().into());
                tags.insert("point".into(), c.split('-').nth(1).unwrap_or("elec").into());
                (c.to_string(), ColumnSpec { unit: "kWh".into(), tags })
            })
            .collect();
        TagManifest { dependent: dependent.map(str::to_string), columns }
    }

    const FOUR_ROWS: &str = "timestamp,chw-elec\n\
        2016-01-01T00:00:00Z,10.5\n\
        2016-01-01T00:15:00Z,11\n\
        2016-01-01T00:30:00Z,NaN\n\
        2016-01-01T00:45:00Z,12.25\n";

    #[test]
    fn minimal_file() {
        let ds = ingest_reader(FOUR_ROWS.as_bytes(), &manifest(&["chw-elec"], Some("chw-elec"))).unwrap();
        assert_eq!(ds.channels.len(), 1);
        let ch = &ds.channels[0];
        assert_eq!(ch.series.len(), 4);
        assert_eq!(ch.id, "plantA.chw-elec");
        assert_eq!(ds.dependent, Some(ch.id.clone()));
        assert_eq!(ds.native_frequency, Duration::minutes(15));
    }

    #[test]
    fn nan_cell_is_missing_not_zero() {
        let ds = ingest_reader(FOUR_ROWS.as_bytes(), &manifest(&["chw-elec"], None)).unwrap();
        let values: Vec<_> = ds.channels[0].series.iter().map(|(_, v)| *v).collect();
        assert_eq!(values, vec![Some(10.5), Some(11.0), None, Some(12.25)]);
    }

    #[test]
    fn missing_timestamp_column() {
        let text = "time_of_day,chw-elec\n2016-01-01T00:00:00Z,1\n";
        let err = ingest_reader(text.as_bytes(), &manifest(&["chw-elec"], None)).unwrap_err();
        assert!(matches!(err, DataError::MissingTimestampColumn(_)));
    }

    #[test]
    fn duplicate_timestamps_rejected() {
        let text = "timestamp,chw-elec\n2016-01-01T00:00:00Z,1\n2016-01-01T00:00:00Z,2\n";
        let err = ingest_reader(text.as_bytes(), &manifest(&["chw-elec"], None)).unwrap_err();
        assert!(matches!(err, DataError::DuplicateTimestamp { .. }));
    }

    #[test]
    fn manifest_column_absent() {
        let err = ingest_reader(FOUR_ROWS.as_bytes(), &manifest(&["chw-elec", "ahu04-elec"], None))
            .unwrap_err();
        match err {
            DataError::ManifestColumnAbsent(c) => assert_eq!(c, "ahu04-elec"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn wide_file_gives_one_channel_per_column() {
        let names: Vec<String> = (0..505).map(|i| format!("eq{i:03}-elec")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut text = String::from("timestamp");
        for n in &names {
            text.push(',');
            text.push_str(n);
        }
        text.push('\n');
        for r in 0..3 {
            text.push_str(&format!("2016-01-01T00:{:02}:00Z", r * 15));
            for c in 0..names.len() {
                text.push_str(&format!(",{}", r * 1000 + c));
            }
            text.push('\n');
        }
        let ds = ingest_reader(text.as_bytes(), &manifest(&refs, Some("eq504-elec"))).unwrap();
        assert_eq!(ds.channels.len(), 505);
        assert_eq!(ds.dependent.as_ref().unwrap(), "plantA.eq504-elec");
        assert_eq!(ds.predictor_ids().len(), 504);
    }

    #[test]
    fn manifest_toml_round_trip() {
        let text = r#"
dependent = "CHW kWh"

[columns."CHW kWh"]
site = "plantA"
equip = "chw"
point = "elec"
unit = "kWh"
"#;
        let m = TagManifest::from_toml_str(text).unwrap();
        assert_eq!(m.columns["CHW kWh"].tags["equip"], "chw");
        assert_eq!(TagManifest::from_toml_str(&m.to_toml_string()).unwrap(), m);
    }
}
