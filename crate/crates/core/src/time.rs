//! Daily time-of-day windows and the binned grid used for flows.
//!
//! Instants are stored in UTC. A window is a half-open time-of-day range
//! `[start, end)` read in a fixed local offset, so the same grid applies to
//! every day of a multi-day collection period.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, NaiveDate, Timelike, Utc};
use thiserror::Error;

pub const SECONDS_PER_DAY: u32 = 86_400;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimeError {
    #[error("invalid time of day {0:?} (expected HH:MM or HH:MM:SS)")]
    BadTimeOfDay(String),
    #[error("invalid window {0:?} (expected HH:MM-HH:MM with start < end)")]
    BadWindow(String),
    #[error("invalid UTC offset {0:?} (expected +HH:MM)")]
    BadOffset(String),
    #[error("bin length must be positive")]
    ZeroBin,
    #[error("window length {window_s} s is not a multiple of the bin length {bin_s} s")]
    Misaligned { window_s: u32, bin_s: u32 },
}

/// Parses `HH:MM` or `HH:MM:SS` into seconds after midnight. `24:00` is
/// accepted as the end of the day.
pub fn parse_time_of_day(s: &str) -> Result<u32, TimeError> {
    let bad = || TimeError::BadTimeOfDay(s.to_string());
    let parts: Vec<&str> = s.trim().split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let nums = parts.iter().map(|p| p.parse::<u32>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?;
    let (h, m, sec) = (nums[0], nums[1], nums.get(2).copied().unwrap_or(0));
    if m >= 60 || sec >= 60 {
        return Err(bad());
    }
    let total = h * 3600 + m * 60 + sec;
    if total > SECONDS_PER_DAY {
        return Err(bad());
    }
    Ok(total)
}

pub fn format_time_of_day(secs: u32) -> String {
    let (h, m, s) = (secs / 3600, (secs / 60) % 60, secs % 60);
    if s == 0 {
        format!("{h:02}:{m:02}")
    } else {
        format!("{h:02}:{m:02}:{s:02}")
    }
}

pub fn parse_offset(s: &str) -> Result<FixedOffset, TimeError> {
    let bad = || TimeError::BadOffset(s.to_string());
    let t = s.trim();
    if t == "Z" || t == "UTC" {
        return Ok(FixedOffset::east_opt(0).expect("zero offset"));
    }
    let (sign, rest) = match t.as_bytes().first() {
        Some(b'+') => (1, &t[1..]),
        Some(b'-') => (-1, &t[1..]),
        _ => return Err(bad()),
    };
    let (h, m) = rest.split_once(':').ok_or_else(bad)?;
    let h: i32 = h.parse().map_err(|_| bad())?;
    let m: i32 = m.parse().map_err(|_| bad())?;
    if h > 23 || m > 59 {
        return Err(bad());
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)
}

/// Half-open time-of-day range `[start, end)` in a fixed local offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyWindow {
    start_s: u32,
    end_s: u32,
    offset: FixedOffset,
}

impl DailyWindow {
    pub fn new(start_s: u32, end_s: u32, offset: FixedOffset) -> Result<Self, TimeError> {
        if start_s >= end_s || end_s > SECONDS_PER_DAY {
            return Err(TimeError::BadWindow(format!(
                "{}-{}",
                format_time_of_day(start_s),
                format_time_of_day(end_s)
            )));
        }
        Ok(Self { start_s, end_s, offset })
    }

    /// Window in UTC, e.g. `DailyWindow::utc("06:30", "09:00")`.
    pub fn utc(start: &str, end: &str) -> Result<Self, TimeError> {
        Self::new(
            parse_time_of_day(start)?,
            parse_time_of_day(end)?,
            FixedOffset::east_opt(0).expect("zero offset"),
        )
    }

    pub fn with_offset(self, offset: FixedOffset) -> Self {
        Self { offset, ..self }
    }

    pub fn start_s(&self) -> u32 {
        self.start_s
    }

    pub fn end_s(&self) -> u32 {
        self.end_s
    }

    pub fn offset(&self) -> FixedOffset {
        self.offset
    }

    pub fn length_s(&self) -> u32 {
        self.end_s - self.start_s
    }

    pub fn length_minutes(&self) -> f64 {
        f64::from(self.length_s()) / 60.0
    }

    /// Seconds after local midnight.
    pub fn local_seconds(&self, t: DateTime<Utc>) -> u32 {
        t.with_timezone(&self.offset).num_seconds_from_midnight()
    }

    pub fn local_date(&self, t: DateTime<Utc>) -> NaiveDate {
        t.with_timezone(&self.offset).date_naive()
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        let s = self.local_seconds(t);
        s >= self.start_s && s < self.end_s
    }

    /// The UTC instant at time-of-day `secs` on local date `date`.
    pub fn instant_on(&self, date: NaiveDate, secs: u32) -> DateTime<Utc> {
        let midnight = date
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_local_timezone(self.offset)
            .single()
            .expect("fixed offsets are unambiguous");
        (midnight + chrono::Duration::seconds(i64::from(secs))).with_timezone(&Utc)
    }

    /// Whether `self` covers `other` (same offset assumed).
    pub fn covers(&self, other: &DailyWindow) -> bool {
        self.start_s <= other.start_s && self.end_s >= other.end_s
    }
}

impl fmt::Display for DailyWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", format_time_of_day(self.start_s), format_time_of_day(self.end_s))
    }
}

/// Parses `HH:MM-HH:MM` as a UTC window; use [`DailyWindow::with_offset`]
/// to localize.
impl FromStr for DailyWindow {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once('-').ok_or_else(|| TimeError::BadWindow(s.to_string()))?;
        Self::utc(a, b)
    }
}

/// A window split into equal half-open bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    window: DailyWindow,
    bin_s: u32,
}

impl TimeGrid {
    pub fn new(window: DailyWindow, bin_s: u32) -> Result<Self, TimeError> {
        if bin_s == 0 {
            return Err(TimeError::ZeroBin);
        }
        if !window.length_s().is_multiple_of(bin_s) {
            return Err(TimeError::Misaligned { window_s: window.length_s(), bin_s });
        }
        Ok(Self { window, bin_s })
    }

    pub fn with_minutes(window: DailyWindow, bin_minutes: u32) -> Result<Self, TimeError> {
        Self::new(window, bin_minutes * 60)
    }

    pub fn window(&self) -> &DailyWindow {
        &self.window
    }

    pub fn bin_s(&self) -> u32 {
        self.bin_s
    }

    pub fn bin_minutes(&self) -> f64 {
        f64::from(self.bin_s) / 60.0
    }

    pub fn len(&self) -> usize {
        (self.window.length_s() / self.bin_s) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `[start, end)` of bin `j` in seconds after local midnight.
    pub fn bin_bounds(&self, j: usize) -> (u32, u32) {
        let start = self.window.start_s + self.bin_s * j as u32;
        (start, start + self.bin_s)
    }

    pub fn bin_label(&self, j: usize) -> (String, String) {
        let (a, b) = self.bin_bounds(j);
        (format_time_of_day(a), format_time_of_day(b))
    }

    pub fn bin_of_seconds(&self, secs: u32) -> Option<usize> {
        if secs < self.window.start_s || secs >= self.window.end_s {
            return None;
        }
        Some(((secs - self.window.start_s) / self.bin_s) as usize)
    }

    pub fn bin_of(&self, t: DateTime<Utc>) -> Option<usize> {
        self.bin_of_seconds(self.window.local_seconds(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_times_and_windows() {
        assert_eq!(parse_time_of_day("06:30").unwrap(), 23_400);
        assert_eq!(parse_time_of_day("24:00").unwrap(), SECONDS_PER_DAY);
        assert_eq!(parse_time_of_day("08:07:05").unwrap(), 29_225);
        assert!(parse_time_of_day("24:01").is_err());
        assert!(parse_time_of_day("7").is_err());
        let w: DailyWindow = "06:30-09:00".parse().unwrap();
        assert_eq!(w.length_minutes(), 150.0);
        assert_eq!(w.to_string(), "06:30-09:00");
        assert!("09:00-06:30".parse::<DailyWindow>().is_err());
    }

    #[test]
    fn half_open_bins() {
        let g = TimeGrid::with_minutes("06:30-09:00".parse().unwrap(), 15).unwrap();
        assert_eq!(g.len(), 10);
        let day = NaiveDate::from_ymd_opt(2019, 11, 28).unwrap();
        let at = |hms: &str| g.window().instant_on(day, parse_time_of_day(hms).unwrap());
        assert_eq!(g.bin_of(at("06:30")), Some(0));
        assert_eq!(g.bin_of(at("08:29:59")), Some(7));
        assert_eq!(g.bin_of(at("08:30")), Some(8));
        assert_eq!(g.bin_of(at("09:00")), None);
        assert_eq!(g.bin_of(at("06:29:59")), None);
        assert_eq!(g.bin_label(6), ("08:00".into(), "08:15".into()));
    }

    #[test]
    fn misaligned_grid_rejected() {
        let w: DailyWindow = "06:30-09:00".parse().unwrap();
        assert_eq!(
            TimeGrid::with_minutes(w, 20).unwrap_err(),
            TimeError::Misaligned { window_s: 9000, bin_s: 1200 }
        );
        assert_eq!(TimeGrid::new(w, 0).unwrap_err(), TimeError::ZeroBin);
    }

    #[test]
    fn offsets_localize() {
        let paris = parse_offset("+01:00").unwrap();
        let w = DailyWindow::utc("06:30", "09:00").unwrap().with_offset(paris);
        let t = DateTime::parse_from_rfc3339("2019-11-28T05:45:00Z").unwrap().with_timezone(&Utc);
        assert!(w.contains(t));
        assert_eq!(w.local_seconds(t), 6 * 3600 + 45 * 60);
        assert!(parse_offset("01:00").is_err());
        assert_eq!(parse_offset("-05:30").unwrap().local_minus_utc(), -19_800);
    }
}
