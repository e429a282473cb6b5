//! Month-resolution time points and closed intervals.
//!
//! A [`Month`] is `year * 12 + (month - 1)`, so January 1987 is `1987 * 12`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month(i32);

impl Month {
    /// Earliest representable month (January of year 0).
    pub const MIN: Month = Month(0);
    /// Latest representable month (December of year 9999).
    pub const MAX: Month = Month(9999 * 12 + 11);

    /// `month` is 1-based.
    pub fn new(year: i32, month: u32) -> Month {
        debug_assert!((1..=12).contains(&month));
        Month(year * 12 + month as i32 - 1)
    }

    pub fn from_index(index: i32) -> Month {
        Month(index)
    }

    pub fn index(self) -> i32 {
        self.0
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    /// 1-based month of the year.
    pub fn month(self) -> u32 {
        self.0.rem_euclid(12) as u32 + 1
    }

    pub fn year_start(year: i32) -> Month {
        Month::new(year, 1)
    }

    pub fn year_end(year: i32) -> Month {
        Month::new(year, 12)
    }

    pub fn is_representable(self) -> bool {
        self >= Month::MIN && self <= Month::MAX
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Month> {
        let bad = || Error::validation("month", format!("expected YYYY-MM, got `{s}`"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Month::new(year, month))
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Month, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Closed interval `[start, end]` of months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonthInterval {
    pub start: Month,
    pub end: Month,
}

impl MonthInterval {
    pub fn new(start: Month, end: Month) -> Result<MonthInterval> {
        if start > end {
            return Err(Error::validation(
                "interval",
                format!("start {start} is after end {end}"),
            ));
        }
        Ok(MonthInterval { start, end })
    }

    /// The whole calendar year.
    pub fn year(year: i32) -> MonthInterval {
        MonthInterval {
            start: Month::year_start(year),
            end: Month::year_end(year),
        }
    }

    pub fn years(first: i32, last: i32) -> MonthInterval {
        MonthInterval {
            start: Month::year_start(first),
            end: Month::year_end(last),
        }
    }

    pub fn single(month: Month) -> MonthInterval {
        MonthInterval {
            start: month,
            end: month,
        }
    }

    /// Number of months covered (both ends inclusive).
    pub fn len_months(&self) -> i64 {
        (self.end.index() - self.start.index()) as i64 + 1
    }

    pub fn intersects(&self, other: &MonthInterval) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Months shared by both intervals, 0 when disjoint.
    pub fn overlap_months(&self, other: &MonthInterval) -> i64 {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if lo > hi {
            0
        } else {
            (hi.index() - lo.index()) as i64 + 1
        }
    }

    pub fn contains(&self, month: Month) -> bool {
        self.start <= month && month <= self.end
    }
}

impl fmt::Display for MonthInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}
