//! Instant parsing and formatting for metadata and command-line flags.

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike, Utc};
use satfield_core::date::UtcDateTime;

/// Parse an ISO-8601 instant. Offsets are converted to UTC; the short forms
/// `YYYY-MM-DDTHH:MMZ` and `YYYY-MM-DDTHH:MM:SSZ` are accepted too.
/// Fractional seconds are truncated.
pub fn parse_instant(text: &str) -> Result<UtcDateTime, String> {
    let utc: DateTime<Utc> = match DateTime::parse_from_rfc3339(text) {
        Ok(t) => t.with_timezone(&Utc),
        Err(_) => ["%Y-%m-%dT%H:%MZ", "%Y-%m-%dT%H:%M:%SZ", "%Y-%m-%d %H:%M"]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
            .map(|n| n.and_utc())
            .ok_or_else(|| format!("`{text}` is not an ISO-8601 instant (e.g. 2019-03-21T17:00:00+00:00)"))?,
    };
    UtcDateTime::new(
        utc.year(),
        utc.month() as u8,
        utc.day() as u8,
        utc.hour() as u8,
        utc.minute() as u8,
        utc.second() as u8,
    )
    .map_err(|e| e.to_string())
}

/// RFC 3339 with an explicit `+00:00` offset.
pub fn format_instant(t: &UtcDateTime) -> String {
    format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}+00:00",
        t.year, t.month, t.day, t.hour, t.minute, t.second
    )
}
