//! Timestamp helpers: interval overlap, midpoints and human-readable references.

use std::fmt::Debug;

use chrono::{DateTime, TimeZone, Timelike, Utc};

use crate::error::{Error, Result};
use crate::model::Timestamp;

/// Closed-interval overlap test: `[a_start, a_end] ∩ [b_start, b_end] ≠ ∅`.
pub fn interval_overlaps<T: PartialOrd + Debug>(a_start: T, a_end: T, b_start: T, b_end: T) -> Result<bool> {
    if a_start > a_end {
        return Err(Error::Precondition(format!(
            "inverted interval [{a_start:?}, {a_end:?}]"
        )));
    }
    if b_start > b_end {
        return Err(Error::Precondition(format!(
            "inverted interval [{b_start:?}, {b_end:?}]"
        )));
    }
    let lo = if a_start >= b_start { a_start } else { b_start };
    let hi = if a_end <= b_end { a_end } else { b_end };
    Ok(lo <= hi)
}

pub fn midpoint_secs(start: Timestamp, end: Timestamp) -> f64 {
    (start.timestamp() as f64 + end.timestamp() as f64) / 2.0
}

/// Drops sub-second precision; stored timestamps have second resolution.
pub fn truncate_secs(t: Timestamp) -> Timestamp {
    t.with_nanosecond(0).unwrap_or(t)
}

pub fn from_secs(secs: i64) -> Timestamp {
    Utc.timestamp_opt(secs, 0)
        .single()
        .unwrap_or(DateTime::<Utc>::MIN_UTC)
}

/// "Saturday, June 8, 2024"
pub fn day_phrase(t: Timestamp) -> String {
    t.format("%A, %B %-d, %Y").to_string()
}

/// Human-readable occurrence reference used to augment text before
/// embedding and reranking.
pub fn time_reference(start: Timestamp, end: Timestamp) -> String {
    if start.date_naive() == end.date_naive() {
        day_phrase(start)
    } else {
        format!("from {} to {}", day_phrase(start), day_phrase(end))
    }
}

/// `[<time reference>] <text>`, the form embedded at write time and shown to
/// the reranker.
pub fn dated_text(text: &str, start: Timestamp, end: Timestamp) -> String {
    format!("[{}] {}", time_reference(start, end), text)
}

pub fn parse_timestamp(s: &str) -> Result<Timestamp> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(truncate_secs(t.with_timezone(&Utc)));
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        let dt = d.and_hms_opt(0, 0, 0).expect("midnight is valid");
        return Ok(Utc.from_utc_datetime(&dt));
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(Utc.from_utc_datetime(&dt));
    }
    Err(Error::InvalidInput(format!("unparseable timestamp {s:?}")))
}
