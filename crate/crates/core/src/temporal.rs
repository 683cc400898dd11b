//! Rule-based resolution of temporal expressions to closed date ranges.
//!
//! Ranges are whole days in UTC: a range ending on a day ends at 23:59:59.

use std::sync::LazyLock;

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Utc, Weekday};
use regex::{Captures, Regex};

use crate::error::{Error, Result};
use crate::model::Timestamp;

pub type TimeRange = (Timestamp, Timestamp);

const MONTHS: &str = "january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sept|sep|oct|nov|dec";
const WEEKDAYS: &str = "monday|tuesday|wednesday|thursday|friday|saturday|sunday";
const NUMBER: &str = r"\d+|a|an|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve";

fn re(pattern: &str) -> Regex {
    let p = pattern
        .replace("{M}", MONTHS)
        .replace("{W}", WEEKDAYS)
        .replace("{N}", NUMBER);
    Regex::new(&format!("(?i){p}")).expect("static regex")
}

static RANGE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(?:between\s+(.+?)\s+and|from\s+(.+?)\s+(?:to|until|through))\s+(.+?)\s*(?:[?.!]|$)")
});
static ISO: LazyLock<Regex> = LazyLock::new(|| re(r"\b(\d{4})-(\d{2})-(\d{2})\b"));
static MONTH_DAY: LazyLock<Regex> =
    LazyLock::new(|| re(r"\b({M})\.?\s+(\d{1,2})(?:st|nd|rd|th)?\b(?:,?\s+(\d{4})\b)?"));
static DAY_MONTH: LazyLock<Regex> =
    LazyLock::new(|| re(r"\b(\d{1,2})(?:st|nd|rd|th)?\s+(?:of\s+)?({M})\b(?:,?\s+(\d{4})\b)?"));
static MONTH_YEAR: LazyLock<Regex> = LazyLock::new(|| re(r"\b({M})\.?,?\s+(\d{4})\b"));
static REL_DAY: LazyLock<Regex> = LazyLock::new(|| re(r"\b(yesterday|today|tonight|tomorrow)\b"));
static WEEKEND: LazyLock<Regex> = LazyLock::new(|| re(r"\b(last|this|past)\s+weekend\b"));
static PERIOD: LazyLock<Regex> = LazyLock::new(|| re(r"\b(last|this|previous|past)\s+(week|month|year)\b"));
static AGO: LazyLock<Regex> = LazyLock::new(|| re(r"\b({N})\s+(day|week|month|year)s?\s+ago\b"));
static PAST_N: LazyLock<Regex> = LazyLock::new(|| re(r"\b(?:past|last)\s+({N})\s+(day|week|month)s?\b"));
static IN_MONTH: LazyLock<Regex> = LazyLock::new(|| re(r"\b(?:in|during)\s+({M})\b"));
static WEEKDAY: LazyLock<Regex> = LazyLock::new(|| re(r"\b({W})\b"));
static YEAR: LazyLock<Regex> = LazyLock::new(|| re(r"\b(19\d{2}|20\d{2}|2100)\b"));

fn month_number(name: &str) -> u32 {
    let n = name.to_lowercase();
    const NAMES: [&str; 12] = [
        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
    ];
    NAMES
        .iter()
        .position(|m| n.starts_with(m))
        .map(|i| i as u32 + 1)
        .expect("regex only matches month names")
}

fn number(word: &str) -> Option<i64> {
    let w = word.to_lowercase();
    let words = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
        "twelve",
    ];
    match w.as_str() {
        "a" | "an" => Some(1),
        _ => words
            .iter()
            .position(|x| *x == w)
            .map(|i| i as i64)
            .or_else(|| w.parse().ok()),
    }
}

fn weekday(name: &str) -> Weekday {
    name.parse().expect("regex only matches weekday names")
}

fn start_of(d: NaiveDate) -> Timestamp {
    Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("valid"))
}

fn end_of(d: NaiveDate) -> Timestamp {
    Utc.from_utc_datetime(&d.and_hms_opt(23, 59, 59).expect("valid"))
}

fn days(a: NaiveDate, b: NaiveDate) -> TimeRange {
    (start_of(a), end_of(b))
}

fn month_span(year: i32, month: u32) -> Option<TimeRange> {
    let first = NaiveDate::from_ymd_opt(year, month, 1)?;
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)?
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)?
    };
    Some(days(first, next.pred_opt()?))
}

fn year_span(year: i32) -> Option<TimeRange> {
    Some(days(
        NaiveDate::from_ymd_opt(year, 1, 1)?,
        NaiveDate::from_ymd_opt(year, 12, 31)?,
    ))
}

fn week_of(d: NaiveDate) -> TimeRange {
    let monday = d - Duration::days(d.weekday().num_days_from_monday() as i64);
    days(monday, monday + Duration::days(6))
}

fn shift_months(year: i32, month: u32, back: i64) -> (i32, u32) {
    let idx = year as i64 * 12 + (month as i64 - 1) - back;
    (idx.div_euclid(12) as i32, idx.rem_euclid(12) as u32 + 1)
}

fn year_or(caps: &Captures<'_>, i: usize, default: i32) -> i32 {
    caps.get(i)
        .and_then(|m| m.as_str().parse().ok())
        .unwrap_or(default)
}

/// Resolves the first temporal expression found in `text` relative to `now`.
/// Returns `Ok(None)` when the text has no recognizable expression and an
/// error when an explicit range is inverted.
pub fn parse_temporal(text: &str, now: Timestamp) -> Result<Option<TimeRange>> {
    if let Some(c) = RANGE.captures(text) {
        let left = c.get(1).or_else(|| c.get(2)).map_or("", |m| m.as_str());
        let right = &c[3];
        if let (Some(a), Some(b)) = (parse_point(left, now), parse_point(right, now)) {
            if a.0 > b.1 {
                return Err(Error::TemporalParse(format!(
                    "range starts after it ends: {:?}",
                    c.get(0).map_or("", |m| m.as_str())
                )));
            }
            return Ok(Some((a.0, b.1)));
        }
    }
    Ok(parse_point(text, now))
}

fn parse_point(text: &str, now: Timestamp) -> Option<TimeRange> {
    let today = now.date_naive();

    if let Some(c) = ISO.captures(text) {
        let d = NaiveDate::from_ymd_opt(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?)?;
        return Some(days(d, d));
    }
    if let Some(c) = MONTH_DAY.captures(text) {
        let year = year_or(&c, 3, today.year());
        if let Some(d) = NaiveDate::from_ymd_opt(year, month_number(&c[1]), c[2].parse().ok()?) {
            return Some(days(d, d));
        }
    }
    if let Some(c) = DAY_MONTH.captures(text) {
        let year = year_or(&c, 3, today.year());
        if let Some(d) = NaiveDate::from_ymd_opt(year, month_number(&c[2]), c[1].parse().ok()?) {
            return Some(days(d, d));
        }
    }
    if let Some(c) = MONTH_YEAR.captures(text) {
        return month_span(c[2].parse().ok()?, month_number(&c[1]));
    }
    if let Some(c) = REL_DAY.captures(text) {
        let d = match c[1].to_lowercase().as_str() {
            "yesterday" => today.pred_opt()?,
            "tomorrow" => today.succ_opt()?,
            _ => today,
        };
        return Some(days(d, d));
    }
    if let Some(c) = WEEKEND.captures(text) {
        let (monday, _) = week_of(today);
        let monday = monday.date_naive();
        let monday = if c[1].eq_ignore_ascii_case("this") {
            monday
        } else {
            monday - Duration::days(7)
        };
        return Some(days(monday + Duration::days(5), monday + Duration::days(6)));
    }
    if let Some(c) = PAST_N.captures(text) {
        let n = number(&c[1])?;
        let back = match c[2].to_lowercase().as_str() {
            "day" => Duration::days(n),
            "week" => Duration::days(7 * n),
            _ => Duration::days(30 * n),
        };
        return Some(days(today - back, today));
    }
    if let Some(c) = PERIOD.captures(text) {
        let current = c[1].eq_ignore_ascii_case("this");
        return match c[2].to_lowercase().as_str() {
            "week" => Some(week_of(if current { today } else { today - Duration::days(7) })),
            "month" => {
                let (y, m) = shift_months(today.year(), today.month(), if current { 0 } else { 1 });
                month_span(y, m)
            }
            _ => year_span(today.year() - if current { 0 } else { 1 }),
        };
    }
    if let Some(c) = AGO.captures(text) {
        let n = number(&c[1])?;
        return match c[2].to_lowercase().as_str() {
            "day" => {
                let d = today - Duration::days(n);
                Some(days(d, d))
            }
            "week" => Some(week_of(today - Duration::days(7 * n))),
            "month" => {
                let (y, m) = shift_months(today.year(), today.month(), n);
                month_span(y, m)
            }
            _ => year_span(today.year() - n as i32),
        };
    }
    if let Some(c) = IN_MONTH.captures(text) {
        let m = month_number(&c[1]);
        let year = if m > today.month() {
            today.year() - 1
        } else {
            today.year()
        };
        return month_span(year, m);
    }
    if let Some(c) = WEEKDAY.captures(text) {
        let target = weekday(&c[1]);
        let mut d = today.pred_opt()?;
        while d.weekday() != target {
            d = d.pred_opt()?;
        }
        return Some(days(d, d));
    }
    if let Some(c) = YEAR.captures(text) {
        return year_span(c[1].parse().ok()?);
    }
    None
}
