use core::f64::consts::PI;

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Whole hours since 1970-01-01T00:00Z. Every series in the pipeline is
/// indexed by UTC hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hour(pub i64);

impl Hour {
    pub fn from_ymdh(year: i32, month: u32, day: u32, hour: u32) -> Result<Self> {
        let dt = chrono::NaiveDate::from_ymd_opt(year, month, day)
            .and_then(|d| d.and_hms_opt(hour, 0, 0))
            .ok_or_else(|| Error::param("timestamp", alloc::format!("{year}-{month}-{day} {hour}h")))?;
        Ok(Self::from_naive(dt))
    }

    pub fn from_naive(dt: NaiveDateTime) -> Self {
        Hour(dt.and_utc().timestamp().div_euclid(3600))
    }

    pub fn to_naive(self) -> NaiveDateTime {
        DateTime::from_timestamp(self.0 * 3600, 0).expect("hour index within chrono range").naive_utc()
    }

    pub fn hour_of_day(self) -> u32 {
        self.0.rem_euclid(24) as u32
    }

    /// Calendar month, 1 through 12.
    pub fn month(self) -> u32 {
        self.to_naive().month()
    }

    pub fn day_of_year(self) -> u32 {
        self.to_naive().ordinal()
    }

    pub fn plus(self, hours: i64) -> Hour {
        Hour(self.0 + hours)
    }

    /// `YYYY-MM-DDTHH:00:00Z`.
    pub fn iso(self) -> alloc::string::String {
        let dt = self.to_naive();
        alloc::format!(
            "{:04}-{:02}-{:02}T{:02}:00:00Z",
            dt.year(),
            dt.month(),
            dt.day(),
            dt.hour()
        )
    }
}

/// `(moy_sin, moy_cos, hod_sin, hod_cos)` with month-of-year scaled by
/// `2π / month_period` and hour-of-day by `2π / 24`.
pub fn cyclic_time_features(ts: Hour, month_period: f64) -> [f64; 4] {
    let moy = ts.month() as f64 * 2.0 * PI / month_period;
    let hod = ts.hour_of_day() as f64 * 2.0 * PI / 24.0;
    [libm::sin(moy), libm::cos(moy), libm::sin(hod), libm::cos(hod)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hour_of_day_quarter_points() {
        let base = Hour::from_ymdh(2019, 3, 14, 0).unwrap();
        let f0 = cyclic_time_features(base, 12.0);
        assert_eq!((f0[2], f0[3]), (0.0, 1.0));
        let f6 = cyclic_time_features(base.plus(6), 12.0);
        assert!((f6[2] - 1.0).abs() < 1e-15 && f6[3].abs() < 1e-15);
        let f12 = cyclic_time_features(base.plus(12), 12.0);
        assert!(f12[2].abs() < 1e-15 && (f12[3] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn features_bounded_for_both_periods() {
        let start = Hour::from_ymdh(2018, 1, 1, 0).unwrap();
        for k in 0..(24 * 400) {
            for period in [12.0, 7.0] {
                let f = cyclic_time_features(start.plus(k), period);
                assert!(f.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn calendar_round_trip() {
        let h = Hour::from_ymdh(2020, 2, 29, 23).unwrap();
        assert_eq!(h.month(), 2);
        assert_eq!(h.hour_of_day(), 23);
        assert_eq!(h.iso(), "2020-02-29T23:00:00Z");
        assert_eq!(Hour::from_naive(h.to_naive()), h);
    }
}
