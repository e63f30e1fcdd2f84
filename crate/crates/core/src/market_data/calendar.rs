//! Fiscal quarters and the statutory statement-release calendar.

use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::DataError;

/// A fiscal quarter, e.g. `Q4 2020`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FiscalQuarter {
    pub year: i32,
    pub quarter: u8,
}

impl FiscalQuarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self, DataError> {
        if !(1..=4).contains(&quarter) {
            return Err(DataError::Validation(format!(
                "quarter {quarter} outside 1..=4 (year {year})"
            )));
        }
        Ok(Self { year, quarter })
    }

    /// Last calendar day of the quarter.
    pub fn end_date(self) -> NaiveDate {
        let (m, d) = match self.quarter {
            1 => (3, 31),
            2 => (6, 30),
            3 => (9, 30),
            _ => (12, 31),
        };
        NaiveDate::from_ymd_opt(self.year, m, d).expect("valid quarter end")
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Self { year: self.year + 1, quarter: 1 }
        } else {
            Self { year: self.year, quarter: self.quarter + 1 }
        }
    }

    pub fn prev(self) -> Self {
        if self.quarter == 1 {
            Self { year: self.year - 1, quarter: 4 }
        } else {
            Self { year: self.year, quarter: self.quarter - 1 }
        }
    }

    /// Quarters elapsed since year 0, Q1. Consecutive quarters differ by one.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }

    pub fn offset(self, quarters: i64) -> Self {
        let o = self.ordinal() + quarters;
        Self { year: o.div_euclid(4) as i32, quarter: (o.rem_euclid(4) + 1) as u8 }
    }
}

impl fmt::Display for FiscalQuarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{} {}", self.quarter, self.year)
    }
}

/// Statutory availability dates for quarterly statements.
///
/// Statements become public two months after the quarter closes:
/// Q1 on May 31, Q2 on Aug 31, Q3 on Nov 30 and Q4 on Feb 28 of the
/// following year. Feb 28 is used in leap years too.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReleaseCalendar;

impl ReleaseCalendar {
    pub fn release_date(self, fq: FiscalQuarter) -> NaiveDate {
        let (y, m, d) = match fq.quarter {
            1 => (fq.year, 5, 31),
            2 => (fq.year, 8, 31),
            3 => (fq.year, 11, 30),
            _ => (fq.year + 1, 2, 28),
        };
        NaiveDate::from_ymd_opt(y, m, d).expect("valid release date")
    }

    /// The quarter whose statutory release falls exactly on `date`, if any.
    pub fn quarter_released_on(self, date: NaiveDate) -> Option<FiscalQuarter> {
        let fq = match (date.month(), date.day()) {
            (5, 31) => FiscalQuarter { year: date.year(), quarter: 1 },
            (8, 31) => FiscalQuarter { year: date.year(), quarter: 2 },
            (11, 30) => FiscalQuarter { year: date.year(), quarter: 3 },
            (2, 28) => FiscalQuarter { year: date.year() - 1, quarter: 4 },
            _ => return None,
        };
        Some(fq)
    }

    /// Most recent quarter whose statutory release is on or before `date`.
    pub fn latest_released(self, date: NaiveDate) -> FiscalQuarter {
        // The quarter ending two quarters before `date`'s quarter is always
        // released by then; step forward while the next one is also out.
        let current = FiscalQuarter { year: date.year(), quarter: ((date.month() - 1) / 3 + 1) as u8 };
        let mut fq = current.offset(-2);
        while self.release_date(fq.next()) <= date {
            fq = fq.next();
        }
        fq
    }

    /// First statutory release date on or after `date`, with its quarter.
    pub fn next_release_on_or_after(self, date: NaiveDate) -> (FiscalQuarter, NaiveDate) {
        let fq = self.latest_released(date);
        let d = self.release_date(fq);
        if d == date {
            (fq, d)
        } else {
            (fq.next(), self.release_date(fq.next()))
        }
    }

    /// All statutory release dates in `[from, to]`, in order.
    pub fn releases_between(self, from: NaiveDate, to: NaiveDate) -> Vec<(FiscalQuarter, NaiveDate)> {
        let mut out = Vec::new();
        if from > to {
            return out;
        }
        let (mut fq, mut d) = self.next_release_on_or_after(from);
        while d <= to {
            out.push((fq, d));
            fq = fq.next();
            d = self.release_date(fq);
        }
        out
    }
}
