use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Hour;
use crate::{Error, Result};

/// Min-max normalization anchors. Values outside the fitted range map
/// outside `[0, 1]` and are left there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Result<Self> {
        let mut it = values.iter().copied();
        let first = it.next().ok_or_else(|| Error::InsufficientData("no values to fit min-max anchors".into()))?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !(max > min) {
            return Err(Error::Undefined(format!("constant series ({min}); min-max scaling undefined")));
        }
        Ok(MinMax { min, max })
    }

    #[inline]
    pub fn transform(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn inverse(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }
}

/// Fit anchors on `fit` and scale `x` with them.
pub fn minmax_fit_transform(x: &[f64], fit: &[f64]) -> Result<(Vec<f64>, MinMax)> {
    let mm = MinMax::fit(fit)?;
    Ok((x.iter().map(|&v| mm.transform(v)).collect(), mm))
}

/// Hourly power of one farm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    pub farm_id: usize,
    pub timestamps: Vec<Hour>,
    pub power: Vec<f64>,
    pub normalized: Vec<f64>,
    pub anchors: Option<MinMax>,
}

impl PowerSeries {
    pub fn new(farm_id: usize, timestamps: Vec<Hour>, power: Vec<f64>) -> Result<Self> {
        if timestamps.len() != power.len() {
            return Err(Error::shape("power series", format!("{} timestamps, {} values", timestamps.len(), power.len())));
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("timestamps", "must be strictly increasing"));
        }
        Ok(PowerSeries { farm_id, timestamps, power, normalized: Vec::new(), anchors: None })
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// Fit anchors on the values strictly before `fit_until` and normalize
    /// the whole series.
    pub fn normalize(&mut self, fit_until: Hour) -> Result<MinMax> {
        let fit: Vec<f64> =
            self.timestamps.iter().zip(&self.power).filter(|(t, _)| **t < fit_until).map(|(_, &p)| p).collect();
        let (normalized, mm) = minmax_fit_transform(&self.power, &fit)?;
        self.normalized = normalized;
        self.anchors = Some(mm);
        Ok(mm)
    }
}

/// A run of consecutive hours with a value for each.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: Hour,
    pub values: Vec<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> Hour {
        self.start.plus(self.values.len() as i64 - 1)
    }
}

/// Turn an irregular hourly series into gap-free segments: runs of up to
/// `max_gap` missing hours are filled with the mean of the readings on
/// either side, longer gaps start a new segment.
pub fn fill_short_gaps(timestamps: &[Hour], values: &[f64], max_gap: usize) -> Result<Vec<Segment>> {
    if timestamps.len() != values.len() {
        return Err(Error::shape("fill_short_gaps", "timestamps and values differ in length"));
    }
    if timestamps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("timestamps", "must be strictly increasing"));
    }
    let mut segments = Vec::new();
    let Some((&t0, &v0)) = timestamps.first().zip(values.first()) else { return Ok(segments) };
    let mut cur = Segment { start: t0, values: alloc::vec![v0] };
    for w in 0..timestamps.len() - 1 {
        let missing = (timestamps[w + 1].0 - timestamps[w].0 - 1) as usize;
        if missing > max_gap {
            segments.push(core::mem::replace(&mut cur, Segment { start: timestamps[w + 1], values: Vec::new() }));
        } else {
            let fill = 0.5 * (values[w] + values[w + 1]);
            cur.values.extend(core::iter::repeat_n(fill, missing));
        }
        cur.values.push(values[w + 1]);
    }
    segments.push(cur);
    Ok(segments)
}
