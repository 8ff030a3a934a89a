//! Project configuration, tagged meter channels, CSV ingestion and alignment
//! of raw channels onto an observation matrix.

mod align;
mod config;
mod ingest;
mod matrix;
mod substitute;
mod tags;

use std::path::{Path, PathBuf};

use chrono::Duration;
use serde::{Deserialize, Serialize};

pub use align::align;
pub use config::{ProjectConfig, StaticFactor, DEFAULT_CONFIDENCE};
pub use ingest::{ingest_csv, ingest_reader, write_csv, ColumnSpec, TagManifest};
pub use matrix::FeatureMatrix;
pub use substitute::{substitute_missing_block, SubstitutionRecord};
pub use tags::{apply_tags, ChannelId, HaystackTags, TagSet, TaggedChannel};

use crate::time::Timestamp;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("config: {0}")]
    Config(String),
    #[error("first CSV column must be `timestamp`, found `{0}`")]
    MissingTimestampColumn(String),
    #[error("unparseable timestamp `{value}` on line {line}")]
    BadTimestamp { line: usize, value: String },
    #[error("duplicate or out-of-order timestamp {timestamp} in `{column}`")]
    DuplicateTimestamp { column: String, timestamp: Timestamp },
    #[error("manifest references column `{0}` which is absent from the CSV")]
    ManifestColumnAbsent(String),
    #[error("CSV column `{0}` has no manifest entry")]
    UntaggedColumn(String),
    #[error("tag hierarchy violation: {0}")]
    Hierarchy(String),
    #[error("duplicate channel id `{0}`")]
    DuplicateChannel(ChannelId),
    #[error("unknown channel `{0}`")]
    UnknownChannel(ChannelId),
    #[error("no dependent channel has been designated")]
    NoDependent,
    #[error("dependent channel `{0}` has no data in the requested period")]
    DependentAbsent(ChannelId),
    #[error("channel `{channel}` has a sample at {timestamp}, off the {spacing_secs} s grid")]
    OffGrid {
        channel: ChannelId,
        timestamp: Timestamp,
        spacing_secs: i64,
    },
    #[error("at least two rows are needed to infer the sample spacing")]
    TooFewRows,
    #[error("column `{0}` has missing values")]
    MissingValues(ChannelId),
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("substitution rejected: {0}")]
    Substitution(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}

/// Every channel ingested from one export, on a shared native spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub channels: Vec<TaggedChannel>,
    #[serde(with = "duration_secs")]
    pub native_frequency: Duration,
    pub dependent: Option<ChannelId>,
}

impl RawDataset {
    pub fn new(
        channels: Vec<TaggedChannel>,
        native_frequency: Duration,
        dependent: Option<ChannelId>,
    ) -> Result<Self, DataError> {
        let mut seen = std::collections::BTreeSet::new();
        for ch in &channels {
            if !seen.insert(&ch.id) {
                return Err(DataError::DuplicateChannel(ch.id.clone()));
            }
        }
        if let Some(dep) = &dependent {
            if !seen.contains(dep) {
                return Err(DataError::UnknownChannel(dep.clone()));
            }
        }
        if native_frequency <= Duration::zero() {
            return Err(DataError::Shape("native frequency must be positive".into()));
        }
        Ok(RawDataset { channels, native_frequency, dependent })
    }

    pub fn channel(&self, id: &ChannelId) -> Option<&TaggedChannel> {
        self.channels.iter().find(|c| &c.id == id)
    }

    pub fn with_dependent(mut self, id: ChannelId) -> Result<Self, DataError> {
        if self.channel(&id).is_none() {
            return Err(DataError::UnknownChannel(id));
        }
        self.dependent = Some(id);
        Ok(self)
    }

    pub fn predictor_ids(&self) -> Vec<ChannelId> {
        self.channels
            .iter()
            .filter(|c| Some(&c.id) != self.dependent.as_ref())
            .map(|c| c.id.clone())
            .collect()
    }
}

pub(crate) mod duration_secs {
    use chrono::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(d.num_seconds())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::seconds(i64::deserialize(d)?))
    }
}
