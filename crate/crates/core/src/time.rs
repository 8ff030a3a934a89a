//! Calendar helpers: measurement frequencies and inclusive date periods.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

pub type Timestamp = DateTime<Utc>;

/// Measurement frequency a model is built at.
///
/// Variants are ordered from finest to coarsest. Nothing coarser than weekly
/// is representable: weekly data already leaves very few rows for testing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Frequency {
    #[serde(rename = "15min")]
    FifteenMinute,
    #[serde(rename = "hourly")]
    Hourly,
    #[serde(rename = "daily")]
    Daily,
    #[serde(rename = "weekly")]
    Weekly,
}

impl Frequency {
    pub const ALL: [Frequency; 4] = [
        Frequency::FifteenMinute,
        Frequency::Hourly,
        Frequency::Daily,
        Frequency::Weekly,
    ];

    pub fn all() -> Vec<Frequency> {
        Self::ALL.to_vec()
    }

    pub fn duration(self) -> Duration {
        match self {
            Frequency::FifteenMinute => Duration::minutes(15),
            Frequency::Hourly => Duration::hours(1),
            Frequency::Daily => Duration::days(1),
            Frequency::Weekly => Duration::weeks(1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Frequency::FifteenMinute => "15min",
            Frequency::Hourly => "hourly",
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
        }
    }

    /// Start of the left-closed interval containing `ts`.
    ///
    /// Sub-daily intervals are aligned to UTC midnight, days start at 00:00 UTC
    /// and weeks start on Monday 00:00 UTC.
    pub fn interval_start(self, ts: Timestamp) -> Timestamp {
        let secs = ts.timestamp();
        let floored = match self {
            Frequency::FifteenMinute | Frequency::Hourly | Frequency::Daily => {
                let step = self.duration().num_seconds();
                secs.div_euclid(step) * step
            }
            Frequency::Weekly => {
                let day = secs.div_euclid(86_400);
                // 1970-01-01 was a Thursday, three days after a Monday.
                let monday = day - (day + 3).rem_euclid(7);
                monday * 86_400
            }
        };
        Utc.timestamp_opt(floored, 0)
            .single()
            .expect("floored timestamp is representable")
    }

    /// Match a sample spacing to a frequency, if it is one of the four.
    pub fn from_duration(spacing: Duration) -> Option<Frequency> {
        Self::ALL.into_iter().find(|f| f.duration() == spacing)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrequencyParseError {
    #[error("frequency `{0}` is coarser than weekly, which is not permitted")]
    CoarserThanWeekly(String),
    #[error("unknown frequency `{0}` (expected 15min, hourly, daily or weekly)")]
    Unknown(String),
}

impl FromStr for Frequency {
    type Err = FrequencyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "15min" | "15m" | "15-minute" | "15minute" | "quarter-hourly" => {
                Ok(Frequency::FifteenMinute)
            }
            "hourly" | "1h" | "hour" => Ok(Frequency::Hourly),
            "daily" | "1d" | "day" => Ok(Frequency::Daily),
            "weekly" | "1w" | "week" => Ok(Frequency::Weekly),
            "monthly" | "month" | "quarterly" | "yearly" | "annual" | "annually" => {
                Err(FrequencyParseError::CoarserThanWeekly(s.to_string()))
            }
            _ => Err(FrequencyParseError::Unknown(s.to_string())),
        }
    }
}

/// A span of whole calendar days, both ends inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatePeriod {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DatePeriod {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DatePeriod { start, end }
    }

    pub fn is_valid(&self) -> bool {
        self.start <= self.end
    }

    /// First instant of the period.
    pub fn start_instant(&self) -> Timestamp {
        self.start.and_time(NaiveTime::MIN).and_utc()
    }

    /// First instant after the period (midnight following the end date).
    pub fn end_instant(&self) -> Timestamp {
        (self.end + Duration::days(1)).and_time(NaiveTime::MIN).and_utc()
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        ts >= self.start_instant() && ts < self.end_instant()
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    /// Number of grid slots of width `step` anchored at the period start.
    pub fn grid_len(&self, step: Duration) -> usize {
        let span = (self.end_instant() - self.start_instant()).num_seconds();
        let step = step.num_seconds();
        assert!(step > 0, "grid step must be positive");
        ((span + step - 1) / step) as usize
    }

    /// Grid instants of width `step` anchored at the period start.
    pub fn grid(&self, step: Duration) -> impl Iterator<Item = Timestamp> {
        let start = self.start_instant();
        (0..self.grid_len(step) as i32).map(move |i| start + step * i)
    }

    /// True if `self` ends strictly before `other` starts.
    pub fn precedes(&self, other: &DatePeriod) -> bool {
        self.end < other.start
    }

    pub fn contains_period(&self, other: &DatePeriod) -> bool {
        other.start >= self.start && other.end <= self.end
    }
}

impl fmt::Display for DatePeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} to {}", self.start, self.end)
    }
}

/// Weekday sanity helper used by the tests and the fixture generator.
pub fn is_monday_midnight(ts: Timestamp) -> bool {
    ts.weekday() == chrono::Weekday::Mon && ts.time() == NaiveTime::MIN
}

/// Parse an ISO-8601 instant. Offsets are honoured; naive values are read as UTC.
pub fn parse_timestamp(raw: &str) -> Option<Timestamp> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(naive.and_utc());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_time(NaiveTime::MIN).and_utc())
}

pub fn format_timestamp(ts: Timestamp) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}
