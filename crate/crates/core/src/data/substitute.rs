use chrono::Months;
use serde::{Deserialize, Serialize};

use super::{ChannelId, DataError, TaggedChannel};
use crate::time::Timestamp;

/// Audit entry for the one permitted substitution: a block of missing data
/// replaced by the same calendar block from another year.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionRecord {
    pub channel: ChannelId,
    pub block_start: Timestamp,
    pub block_end: Timestamp,
    pub years_back: u32,
    pub substituted: Vec<(Timestamp, Timestamp, f64)>,
    pub justification: String,
}

/// Fill a wholly missing block `[start, end)` with readings taken `years_back`
/// years earlier. Every filled cell is listed in the returned record.
pub fn substitute_missing_block(
    channel: &TaggedChannel,
    start: Timestamp,
    end: Timestamp,
    years_back: u32,
    justification: &str,
) -> Result<(TaggedChannel, SubstitutionRecord), DataError> {
    if years_back == 0 || start >= end {
        return Err(DataError::Substitution("empty block or zero year offset".into()));
    }
    if justification.trim().is_empty() {
        return Err(DataError::Substitution("a justification must be recorded".into()));
    }
    let in_block: Vec<usize> = channel
        .series
        .iter()
        .enumerate()
        .filter(|(_, (t, _))| *t >= start && *t < end)
        .map(|(i, _)| i)
        .collect();
    if in_block.is_empty() {
        return Err(DataError::Substitution("no grid rows inside the block".into()));
    }
    if let Some(&i) = in_block.iter().find(|&&i| channel.series[i].1.is_some()) {
        return Err(DataError::Substitution(format!(
            "block is not consistently missing: {} has a reading",
            channel.series[i].0
        )));
    }

    let mut out = channel.clone();
    let mut substituted = Vec::with_capacity(in_block.len());
    for i in in_block {
        let target = channel.series[i].0;
        let source = target
            .checked_sub_months(Months::new(12 * years_back))
            .ok_or_else(|| DataError::Substitution(format!("no calendar match for {target}")))?;
        let value = channel
            .series
            .binary_search_by_key(&source, |(t, _)| *t)
            .ok()
            .and_then(|j| channel.series[j].1)
            .ok_or_else(|| DataError::Substitution(format!("source reading at {source} is missing")))?;
        out.series[i].1 = Some(value);
        substituted.push((target, source, value));
    }
    let record = SubstitutionRecord {
        channel: channel.id.clone(),
        block_start: start,
        block_end: end,
        years_back,
        substituted,
        justification: justification.to_string(),
    };
    Ok((out, record))
}
