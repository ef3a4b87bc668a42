//! Calendar months at the resolution of job-history data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonthError {
    #[error("malformed month `{0}` (expected YYYY-MM)")]
    Malformed(String),
    #[error("month out of range in `{0}`")]
    OutOfRange(String),
    #[error("empty window [{start}, {end})")]
    EmptyWindow { start: Month, end: Month },
}

/// A calendar month. Ordering is chronological.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u8,
}

impl Month {
    pub fn new(year: i32, month: u8) -> Result<Self, MonthError> {
        if !(1..=12).contains(&month) || !(0..=9999).contains(&year) {
            return Err(MonthError::OutOfRange(format!("{year:04}-{month:02}")));
        }
        Ok(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    /// Months elapsed since January of year 0.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        let year = ordinal.div_euclid(12) as i32;
        let month = ordinal.rem_euclid(12) as u8 + 1;
        Self { year, month }
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = MonthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| MonthError::Malformed(s.to_string()))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(MonthError::Malformed(s.to_string()));
        }
        let year: i32 = y.parse().map_err(|_| MonthError::Malformed(s.to_string()))?;
        let month: u8 = m.parse().map_err(|_| MonthError::Malformed(s.to_string()))?;
        Month::new(year, month).map_err(|_| MonthError::OutOfRange(s.to_string()))
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open month interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonthWindow {
    pub start: Month,
    pub end: Month,
}

impl MonthWindow {
    pub fn new(start: Month, end: Month) -> Result<Self, MonthError> {
        if start >= end {
            return Err(MonthError::EmptyWindow { start, end });
        }
        Ok(Self { start, end })
    }

    /// Window covering whole calendar years `first..=last`.
    pub fn years(first: i32, last: i32) -> Result<Self, MonthError> {
        Self::new(Month::new(first, 1)?, Month::new(last + 1, 1)?)
    }

    pub fn contains(&self, m: Month) -> bool {
        self.start <= m && m < self.end
    }
}

impl fmt::Display for MonthWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats() {
        let m: Month = "2012-06".parse().unwrap();
        assert_eq!(m.year(), 2012);
        assert_eq!(m.month(), 6);
        assert_eq!(m.to_string(), "2012-06");
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["2012-13", "2012-00", "12-06", "2012/06", "2012-6", "", "abcd-ef"] {
            assert!(bad.parse::<Month>().is_err(), "{bad}");
        }
    }

    #[test]
    fn ordinal_roundtrip() {
        let m = Month::new(1999, 12).unwrap();
        assert_eq!(m.offset(1), Month::new(2000, 1).unwrap());
        assert_eq!(Month::from_ordinal(m.ordinal()), m);
    }

    #[test]
    fn window_is_half_open() {
        let w = MonthWindow::years(2010, 2014).unwrap();
        assert!(w.contains("2010-01".parse().unwrap()));
        assert!(w.contains("2014-12".parse().unwrap()));
        assert!(!w.contains("2015-01".parse().unwrap()));
        assert!(!w.contains("2009-12".parse().unwrap()));
        let m = Month::new(2010, 1).unwrap();
        assert!(MonthWindow::new(m, m).is_err());
    }
}
