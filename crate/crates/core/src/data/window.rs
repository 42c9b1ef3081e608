use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Hour, TIME_FEATURES};
use crate::{Error, Result};

/// Spatial extent and channel count of one source after level selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl GridShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        GridShape { height, width, channels }
    }

    pub const fn cells(&self) -> usize {
        self.height * self.width * self.channels
    }
}

/// Normalized, hour-aligned features of one gap-free stretch of one farm.
/// Grids are stored once per hour and shared by every window that covers
/// that hour.
#[derive(Debug, Clone, PartialEq)]
pub struct FarmFrames {
    pub farm_id: usize,
    pub start: Hour,
    pub power: Vec<f64>,
    pub gfs: Vec<f64>,
    pub arp: Vec<f64>,
    pub time: Vec<[f64; TIME_FEATURES]>,
    pub gfs_shape: GridShape,
    pub arp_shape: GridShape,
}

impl FarmFrames {
    pub fn validate(&self) -> Result<()> {
        let t = self.power.len();
        if self.gfs.len() != t * self.gfs_shape.cells()
            || self.arp.len() != t * self.arp_shape.cells()
            || self.time.len() != t
        {
            return Err(Error::shape(
                "farm frames",
                format!(
                    "{t} hours but gfs={} arp={} time={} values",
                    self.gfs.len(),
                    self.arp.len(),
                    self.time.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> Hour {
        self.start.plus(i as i64)
    }

    pub fn gfs_at(&self, i: usize) -> &[f64] {
        let c = self.gfs_shape.cells();
        &self.gfs[i * c..(i + 1) * c]
    }

    pub fn arp_at(&self, i: usize) -> &[f64] {
        let c = self.arp_shape.cells();
        &self.arp[i * c..(i + 1) * c]
    }
}

/// One window: lags are the `lookback` hours before `target_start`, targets
/// the `horizon` hours from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub frame: usize,
    pub target_start: usize,
}

/// Model-ready windows over one or more farms. Logically this is the set of
/// arrays `x_lags [N, lookback, 1]`, `x_gfs [N, horizon, h, w, c]`,
/// `x_arp`, `x_time [N, horizon, 4]`, `x_farm [N, farms]`, `y [N, horizon]`;
/// [`batch`](Self::batch) materializes any subset of rows.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    frames: Vec<Arc<FarmFrames>>,
    samples: Vec<SampleRef>,
    lookback: usize,
    horizon: usize,
    n_farms: usize,
}

/// Every window of `frames` with targets starting every `stride` hours,
/// anchored so that the last window ends on the last hour.
pub fn window_samples(
    frames: Arc<FarmFrames>,
    lookback: usize,
    horizon: usize,
    stride: usize,
    n_farms: usize,
) -> Result<WindowedDataset> {
    frames.validate()?;
    if stride == 0 || horizon == 0 {
        return Err(Error::param("stride", "stride and horizon must be positive"));
    }
    if frames.farm_id >= n_farms {
        return Err(Error::param("farm_id", format!("farm {} with {n_farms} one-hot slots", frames.farm_id)));
    }
    let t = frames.len();
    if t < lookback + horizon {
        return Err(Error::InsufficientData(format!("{t} hours, a window needs {}", lookback + horizon)));
    }
    let last = t - horizon;
    let mut starts: Vec<usize> = (0..).map(|k| k * stride).take_while(|&off| off + lookback <= last).map(|off| last - off).collect();
    starts.reverse();
    let samples = starts.into_iter().map(|target_start| SampleRef { frame: 0, target_start }).collect();
    Ok(WindowedDataset { frames: alloc::vec![frames], samples, lookback, horizon, n_farms })
}

/// Concatenate along the sample axis. Provenance (farm id per sample) is
/// kept through the shared frames.
pub fn concat_farms_global(datasets: &[WindowedDataset]) -> Result<WindowedDataset> {
    let first = datasets.first().ok_or_else(|| Error::InsufficientData("no datasets to concatenate".into()))?;
    let mut out = WindowedDataset {
        frames: Vec::new(),
        samples: Vec::new(),
        lookback: first.lookback,
        horizon: first.horizon,
        n_farms: first.n_farms,
    };
    for d in datasets {
        if (d.lookback, d.horizon, d.n_farms) != (first.lookback, first.horizon, first.n_farms)
            || d.grid_shapes() != first.grid_shapes()
        {
            return Err(Error::shape("concat_farms_global", "datasets differ in window or grid shape"));
        }
        let offset = out.frames.len();
        out.frames.extend(d.frames.iter().cloned());
        out.samples.extend(d.samples.iter().map(|s| SampleRef { frame: s.frame + offset, ..*s }));
    }
    Ok(out)
}

impl WindowedDataset {
    pub fn from_parts(
        frames: Vec<Arc<FarmFrames>>,
        samples: Vec<SampleRef>,
        lookback: usize,
        horizon: usize,
        n_farms: usize,
    ) -> Result<Self> {
        for s in &samples {
            let f = frames.get(s.frame).ok_or_else(|| Error::shape("dataset", "sample refers to a missing frame"))?;
            if s.target_start < lookback || s.target_start + horizon > f.len() {
                return Err(Error::shape("dataset", "sample window runs outside its frame"));
            }
        }
        Ok(WindowedDataset { frames, samples, lookback, horizon, n_farms })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_farms(&self) -> usize {
        self.n_farms
    }

    pub fn frames(&self) -> &[Arc<FarmFrames>] {
        &self.frames
    }

    pub fn samples(&self) -> &[SampleRef] {
        &self.samples
    }

    /// `(gfs, arp)` grid shapes, if the dataset has any frames.
    pub fn grid_shapes(&self) -> Option<(GridShape, GridShape)> {
        self.frames.first().map(|f| (f.gfs_shape, f.arp_shape))
    }

    fn frame(&self, i: usize) -> (&FarmFrames, usize) {
        let s = self.samples[i];
        (&self.frames[s.frame], s.target_start)
    }

    pub fn farm(&self, i: usize) -> usize {
        self.frame(i).0.farm_id
    }

    /// Timestamp of the first target hour.
    pub fn sample_time(&self, i: usize) -> Hour {
        let (f, s) = self.frame(i);
        f.timestamp(s)
    }

    pub fn target_time(&self, i: usize, step: usize) -> Hour {
        self.sample_time(i).plus(step as i64)
    }

    pub fn lag_time(&self, i: usize, k: usize) -> Hour {
        let (f, s) = self.frame(i);
        f.timestamp(s - self.lookback + k)
    }

    pub fn lags(&self, i: usize) -> &[f64] {
        let (f, s) = self.frame(i);
        &f.power[s - self.lookback..s]
    }

    pub fn targets(&self, i: usize) -> &[f64] {
        let (f, s) = self.frame(i);
        &f.power[s..s + self.horizon]
    }

    pub fn gfs(&self, i: usize, step: usize) -> &[f64] {
        let (f, s) = self.frame(i);
        f.gfs_at(s + step)
    }

    pub fn arp(&self, i: usize, step: usize) -> &[f64] {
        let (f, s) = self.frame(i);
        f.arp_at(s + step)
    }

    pub fn time(&self, i: usize, step: usize) -> [f64; TIME_FEATURES] {
        let (f, s) = self.frame(i);
        f.time[s + step]
    }

    pub fn farm_one_hot(&self, i: usize) -> Vec<f64> {
        let mut row = alloc::vec![0.0; self.n_farms];
        row[self.farm(i)] = 1.0;
        row
    }

    /// Rows `indices`, sharing frame storage.
    pub fn subset(&self, indices: &[usize]) -> WindowedDataset {
        WindowedDataset {
            frames: self.frames.clone(),
            samples: indices.iter().map(|&i| self.samples[i]).collect(),
            lookback: self.lookback,
            horizon: self.horizon,
            n_farms: self.n_farms,
        }
    }

    /// Distinct farm ids in first-appearance order.
    pub fn farm_ids(&self) -> Vec<usize> {
        let mut ids = Vec::new();
        for i in 0..self.len() {
            let f = self.farm(i);
            if !ids.contains(&f) {
                ids.push(f);
            }
        }
        ids
    }

    /// Indices of the samples of `farm`, in dataset order.
    pub fn farm_indices(&self, farm: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.farm(i) == farm).collect()
    }

    /// Split back into one dataset per farm.
    pub fn by_farm(&self) -> Vec<(usize, WindowedDataset)> {
        self.farm_ids().into_iter().map(|f| (f, self.subset(&self.farm_indices(f)))).collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let (gs, asz) = self.grid_shapes().unwrap_or((GridShape::new(0, 0, 0), GridShape::new(0, 0, 0)));
        let (l, h) = (self.lookback, self.horizon);
        let b = indices.len();
        let mut out = Batch {
            size: b,
            lookback: l,
            horizon: h,
            n_farms: self.n_farms,
            gfs_shape: gs,
            arp_shape: asz,
            lags: Vec::with_capacity(b * l),
            gfs: Vec::with_capacity(b * h * gs.cells()),
            arp: Vec::with_capacity(b * h * asz.cells()),
            time: Vec::with_capacity(b * h * TIME_FEATURES),
            farm: Vec::with_capacity(b * self.n_farms),
            y: Vec::with_capacity(b * h),
            farms: Vec::with_capacity(b),
        };
        for &i in indices {
            out.lags.extend_from_slice(self.lags(i));
            for step in 0..h {
                out.gfs.extend_from_slice(self.gfs(i, step));
                out.arp.extend_from_slice(self.arp(i, step));
                out.time.extend_from_slice(&self.time(i, step));
            }
            out.farm.extend(self.farm_one_hot(i));
            out.y.extend_from_slice(self.targets(i));
            out.farms.push(self.farm(i));
        }
        out
    }

    pub fn all(&self) -> Batch {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }
}

/// Materialized rows of a [`WindowedDataset`], flat row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub n_farms: usize,
    pub gfs_shape: GridShape,
    pub arp_shape: GridShape,
    /// `[size, lookback]`
    pub lags: Vec<f64>,
    /// `[size, horizon, h, w, c]`
    pub gfs: Vec<f64>,
    pub arp: Vec<f64>,
    /// `[size, horizon, 4]`
    pub time: Vec<f64>,
    /// `[size, n_farms]`
    pub farm: Vec<f64>,
    /// `[size, horizon]`
    pub y: Vec<f64>,
    pub farms: Vec<usize>,
}
