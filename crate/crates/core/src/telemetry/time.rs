//! Minute-resolution UTC time axis.

use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::TelemetryError;

pub const MINUTES_PER_DAY: i64 = 1440;
pub const MINUTES_PER_WEEK: i64 = 10080;

/// Thursday 1970-01-01 is day 3 of a Monday-anchored week.
const EPOCH_WEEKDAY_OFFSET: i64 = 3 * MINUTES_PER_DAY;

/// One minute on the UTC time axis, counted from the Unix epoch.
///
/// The minute-of-week index is anchored to Monday 00:00 UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Minute(i64);

impl Minute {
    pub fn new(minutes_since_epoch: i64) -> Self {
        Minute(minutes_since_epoch)
    }

    pub fn value(self) -> i64 {
        self.0
    }

    /// Minute-of-week in `[0, 10080)`, Monday 00:00 = 0.
    pub fn minute_of_week(self) -> usize {
        (self.0 + EPOCH_WEEKDAY_OFFSET).rem_euclid(MINUTES_PER_WEEK) as usize
    }

    /// Monday-anchored week index; consecutive minutes of one week share it.
    pub fn week_index(self) -> i64 {
        (self.0 + EPOCH_WEEKDAY_OFFSET).div_euclid(MINUTES_PER_WEEK)
    }

    /// Parses either an ISO-8601 UTC timestamp truncated to the minute
    /// (`2019-04-15T18:52Z`) or a bare integer of minutes since the epoch.
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        if let Ok(v) = text.parse::<i64>() {
            return Ok(Minute(v));
        }
        let naive = NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%MZ")
            .map_err(|e| format!("invalid minute timestamp {text:?}: {e}"))?;
        Ok(Minute(naive.and_utc().timestamp() / 60))
    }

    /// Parses a `YYYY-MM-DD` UTC date into its first minute.
    pub fn parse_date(text: &str) -> Result<Self, String> {
        let date = NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
            .map_err(|e| format!("invalid date {text:?}: {e}"))?;
        let midnight = date.and_hms_opt(0, 0, 0).expect("midnight exists");
        Ok(Minute(midnight.and_utc().timestamp() / 60))
    }

    /// UTC day index (days since epoch) containing this minute.
    pub fn day_index(self) -> i64 {
        self.0.div_euclid(MINUTES_PER_DAY)
    }

    /// `YYYY-MM-DD` of the UTC day containing this minute.
    pub fn to_date_string(self) -> String {
        self.to_datetime().format("%Y-%m-%d").to_string()
    }

    fn to_datetime(self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.0 * 60, 0).single().expect("in-range timestamp")
    }
}

impl fmt::Display for Minute {
    /// Canonical ISO-8601 form truncated to the minute, e.g. `2019-04-15T18:52Z`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_datetime().format("%Y-%m-%dT%H:%MZ"))
    }
}

impl std::ops::Add<i64> for Minute {
    type Output = Minute;
    fn add(self, rhs: i64) -> Minute {
        Minute(self.0 + rhs)
    }
}

impl std::ops::Sub<Minute> for Minute {
    type Output = i64;
    fn sub(self, rhs: Minute) -> i64 {
        self.0 - rhs.0
    }
}

/// Half-open minute interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: Minute,
    pub end: Minute,
}

impl TimeSpan {
    pub fn new(start: Minute, end: Minute) -> Self {
        assert!(end.value() >= start.value(), "span end before start");
        TimeSpan { start, end }
    }

    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, t: Minute) -> bool {
        t >= self.start && t < self.end
    }

    pub fn minutes(&self) -> impl Iterator<Item = Minute> {
        (self.start.value()..self.end.value()).map(Minute::new)
    }

    /// Parses `start/end` with both endpoints in any `Minute::parse` form.
    pub fn parse(text: &str) -> Result<Self, String> {
        let (a, b) = text
            .split_once('/')
            .ok_or_else(|| format!("invalid span {text:?}: expected start/end"))?;
        let start = Minute::parse(a)?;
        let end = Minute::parse(b)?;
        if end < start {
            return Err(format!("invalid span {text:?}: end before start"));
        }
        Ok(TimeSpan { start, end })
    }
}

impl fmt::Display for TimeSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.start, self.end)
    }
}

pub(super) fn parse_minute_field(text: &str, line: u64) -> Result<Minute, TelemetryError> {
    Minute::parse(text).map_err(|message| TelemetryError::Parse { line, message })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_is_thursday() {
        assert_eq!(Minute::new(0).minute_of_week(), 3 * 1440);
    }

    #[test]
    fn monday_anchor() {
        // 2019-04-15 was a Monday.
        let m = Minute::parse("2019-04-15T00:00Z").unwrap();
        assert_eq!(m.minute_of_week(), 0);
        assert_eq!((m + 10079).minute_of_week(), 10079);
        assert_eq!((m + 10080).minute_of_week(), 0);
    }

    #[test]
    fn iso_round_trip() {
        let m = Minute::parse("2019-04-15T18:52Z").unwrap();
        assert_eq!(m.to_string(), "2019-04-15T18:52Z");
        assert_eq!(Minute::parse(&m.value().to_string()).unwrap(), m);
    }

    #[test]
    fn rejects_second_resolution() {
        assert!(Minute::parse("2019-04-15T18:52:30Z").is_err());
    }

    #[test]
    fn week_index_increments_on_monday() {
        let sunday_last = Minute::parse("2019-04-14T23:59Z").unwrap();
        let monday_first = Minute::parse("2019-04-15T00:00Z").unwrap();
        assert_eq!(sunday_last.week_index() + 1, monday_first.week_index());
    }

    #[test]
    fn span_contains_half_open() {
        let span = TimeSpan::new(Minute::new(10), Minute::new(20));
        assert!(span.contains(Minute::new(10)));
        assert!(span.contains(Minute::new(19)));
        assert!(!span.contains(Minute::new(20)));
        assert_eq!(span.len(), 10);
    }
}
