use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::time::Timestamp;

/// Identifier of a metered channel, e.g. `plantA.ahu04-elec`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub String);

impl ChannelId {
    pub fn new(id: impl Into<String>) -> Self {
        ChannelId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ChannelId {
    fn from(s: &str) -> Self {
        ChannelId(s.to_string())
    }
}

impl PartialEq<str> for ChannelId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for ChannelId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// Raw key/value tag set as it appears in a manifest entry.
pub type TagSet = BTreeMap<String, String>;

/// Haystack-style site → equip → point tagging.
///
/// The hierarchy is structural: a point always belongs to one equip, which
/// belongs to one site. Any further keys are kept as free-form markers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaystackTags {
    pub site: String,
    pub equip: String,
    pub point: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub markers: BTreeMap<String, String>,
}

impl HaystackTags {
    /// Validate a raw tag set against the three-level hierarchy.
    ///
    /// Optional `siteRef`/`equipRef` keys must agree with the `site`/`equip`
    /// entities they point at.
    pub fn from_tag_set(tags: &TagSet) -> Result<Self, DataError> {
        let entity = |key: &str| -> Result<String, DataError> {
            let value = tags
                .get(key)
                .ok_or_else(|| DataError::Hierarchy(format!("missing `{key}` tag")))?;
            let value = value.trim();
            if value.is_empty() || value.chars().any(char::is_whitespace) {
                return Err(DataError::Hierarchy(format!(
                    "`{key}` tag must be a non-empty name without whitespace"
                )));
            }
            Ok(value.to_string())
        };
        let site = entity("site")?;
        let equip = entity("equip")?;
        let point = entity("point")?;
        if site.contains('.') {
            return Err(DataError::Hierarchy(format!("site name `{site}` may not contain '.'")));
        }
        if let Some(site_ref) = tags.get("siteRef") {
            if site_ref.trim() != site {
                return Err(DataError::Hierarchy(format!(
                    "equip references site `{site_ref}` but is tagged on site `{site}`"
                )));
            }
        }
        if let Some(equip_ref) = tags.get("equipRef") {
            if equip_ref.trim() != equip {
                return Err(DataError::Hierarchy(format!(
                    "point references equip `{equip_ref}` but is tagged on equip `{equip}`"
                )));
            }
        }
        let markers = tags
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "site" | "equip" | "point" | "siteRef" | "equipRef"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(HaystackTags { site, equip, point, markers })
    }

    /// Joined `site.equip-point` name.
    pub fn channel_id(&self) -> ChannelId {
        ChannelId(format!("{}.{}-{}", self.site, self.equip, self.point))
    }

    /// The `equip-point` part, as used in feature tables.
    pub fn short_name(&self) -> String {
        format!("{}-{}", self.equip, self.point)
    }
}

/// One metered variable and its time series. Missing readings are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedChannel {
    pub id: ChannelId,
    /// Column header the channel was read from.
    pub column: String,
    pub tags: Option<HaystackTags>,
    pub unit: String,
    pub series: Vec<(Timestamp, Option<f64>)>,
}

impl TaggedChannel {
    /// Build an untagged channel; `id` defaults to the column name.
    pub fn untagged(
        column: impl Into<String>,
        unit: impl Into<String>,
        series: Vec<(Timestamp, Option<f64>)>,
    ) -> Result<Self, DataError> {
        let column = column.into();
        check_increasing(&column, &series)?;
        Ok(TaggedChannel {
            id: ChannelId(column.clone()),
            column,
            tags: None,
            unit: unit.into(),
            series,
        })
    }

    pub fn present_count(&self) -> usize {
        self.series.iter().filter(|(_, v)| v.is_some()).count()
    }
}

fn check_increasing(column: &str, series: &[(Timestamp, Option<f64>)]) -> Result<(), DataError> {
    for pair in series.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(DataError::DuplicateTimestamp {
                column: column.to_string(),
                timestamp: pair[1].0,
            });
        }
    }
    Ok(())
}

/// Attach validated hierarchical tags; the id becomes `site.equip-point`.
pub fn apply_tags(channel: TaggedChannel, tags: &TagSet) -> Result<TaggedChannel, DataError> {
    let parsed = HaystackTags::from_tag_set(tags)?;
    Ok(TaggedChannel {
        id: parsed.channel_id(),
        tags: Some(parsed),
        ..channel
    })
}
