//! Minimal proleptic-Gregorian UTC timestamps.
//!
//! Only what the ephemeris and the dataset metadata need: validation,
//! day-of-year, and a continuous day count.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar month, `1..=12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Month(u8);

impl Month {
    pub const ALL: [Month; 12] = [
        Month(1),
        Month(2),
        Month(3),
        Month(4),
        Month(5),
        Month(6),
        Month(7),
        Month(8),
        Month(9),
        Month(10),
        Month(11),
        Month(12),
    ];

    pub fn new(number: u8) -> Result<Self> {
        if (1..=12).contains(&number) {
            Ok(Month(number))
        } else {
            Err(Error::validation("month", alloc::format!("{number} not in 1..=12")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Zero-based row into a 12-entry table.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    /// Meteorological season: 0 = winter (DJF), 1 = spring, 2 = summer, 3 = autumn.
    pub fn season(self) -> usize {
        usize::from(self.0 % 12 / 3)
    }
}

impl TryFrom<u8> for Month {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Month::new(value)
    }
}

impl From<Month> for u8 {
    fn from(m: Month) -> u8 {
        m.0
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}", self.0)
    }
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(year) => 29,
        2 => 28,
        _ => 0,
    }
}

/// A UTC instant with second resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UtcDateTime {
    pub year: i32,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

impl UtcDateTime {
    pub fn new(year: i32, month: u8, day: u8, hour: u8, minute: u8, second: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::validation("date", alloc::format!("month {month}")));
        }
        if day == 0 || day > days_in_month(year, month) {
            return Err(Error::validation(
                "date",
                alloc::format!("day {day} for {year}-{month:02}"),
            ));
        }
        if hour > 23 || minute > 59 || second > 59 {
            return Err(Error::validation(
                "time",
                alloc::format!("{hour:02}:{minute:02}:{second:02}"),
            ));
        }
        Ok(UtcDateTime {
            year,
            month,
            day,
            hour,
            minute,
            second,
        })
    }

    pub fn ymd_hm(year: i32, month: u8, day: u8, hour: u8, minute: u8) -> Result<Self> {
        Self::new(year, month, day, hour, minute, 0)
    }

    pub fn month(&self) -> Month {
        Month(self.month)
    }

    /// 1-based ordinal day within the year.
    pub fn day_of_year(&self) -> u16 {
        let before: u16 = (1..self.month)
            .map(|m| u16::from(days_in_month(self.year, m)))
            .sum();
        before + u16::from(self.day)
    }

    pub fn days_in_year(&self) -> u16 {
        if is_leap_year(self.year) {
            366
        } else {
            365
        }
    }

    pub fn hours_of_day(&self) -> f64 {
        f64::from(self.hour) + f64::from(self.minute) / 60.0 + f64::from(self.second) / 3600.0
    }

    /// Days since 1970-01-01T00:00Z, including the fractional time of day.
    pub fn days_since_unix_epoch(&self) -> f64 {
        days_from_civil(self.year, self.month, self.day) as f64 + self.hours_of_day() / 24.0
    }

    /// Shift by a whole number of minutes, carrying across days and years.
    pub fn plus_minutes(&self, minutes: i64) -> Self {
        let total = days_from_civil(self.year, self.month, self.day) * 1440
            + i64::from(self.hour) * 60
            + i64::from(self.minute)
            + minutes;
        let days = total.div_euclid(1440);
        let rem = total.rem_euclid(1440);
        let (year, month, day) = civil_from_days(days);
        UtcDateTime {
            year,
            month,
            day,
            hour: (rem / 60) as u8,
            minute: (rem % 60) as u8,
            second: self.second,
        }
    }
}

impl fmt::Display for UtcDateTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z",
            self.year, self.month, self.day, self.hour, self.minute, self.second
        )
    }
}

// Howard Hinnant's civil-date algorithms.
fn days_from_civil(year: i32, month: u8, day: u8) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = i64::from(month);
    let doy = (153 * (m + if m > 2 { -3 } else { 9 }) + 2) / 5 + i64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i32, u8, u8) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    ((y + i64::from(m <= 2)) as i32, m as u8, d as u8)
}
