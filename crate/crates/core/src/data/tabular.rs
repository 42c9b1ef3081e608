use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{GridShape, WindowedDataset, TIME_FEATURES};
use crate::{Error, Matrix, Result};

/// Column layout of the flat per-step feature rows:
/// `[gfs grid | arpege grid | time (4) | farm one-hot | lags]`.
/// Grids are flattened `(lat, lon, level)` row-major; lags run oldest to
/// newest and are the most recent `lags` hours before the first target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabularLayout {
    pub gfs: GridShape,
    pub arp: GridShape,
    pub n_farms: usize,
    pub lags: usize,
}

impl TabularLayout {
    pub fn of(dataset: &WindowedDataset, lags: usize) -> Result<Self> {
        let (gfs, arp) = dataset.grid_shapes().ok_or_else(|| Error::InsufficientData("empty dataset".into()))?;
        if lags > dataset.lookback() {
            return Err(Error::param("lags", format!("{lags} lags from a lookback of {}", dataset.lookback())));
        }
        Ok(TabularLayout { gfs, arp, n_farms: dataset.n_farms(), lags })
    }

    pub fn width(&self) -> usize {
        self.gfs.cells() + self.arp.cells() + TIME_FEATURES + self.n_farms + self.lags
    }

    /// Human-readable source of column `j`.
    pub fn column_name(&self, j: usize) -> Option<String> {
        let grid = |prefix: &str, g: &GridShape, k: usize| {
            let level = k % g.channels;
            let lon = (k / g.channels) % g.width;
            let lat = k / (g.channels * g.width);
            format!("{prefix}[lat={lat},lon={lon},level={level}]")
        };
        let mut k = j;
        if k < self.gfs.cells() {
            return Some(grid("gfs", &self.gfs, k));
        }
        k -= self.gfs.cells();
        if k < self.arp.cells() {
            return Some(grid("arpege", &self.arp, k));
        }
        k -= self.arp.cells();
        if k < TIME_FEATURES {
            return Some(String::from(["moy_sin", "moy_cos", "hod_sin", "hod_cos"][k]));
        }
        k -= TIME_FEATURES;
        if k < self.n_farms {
            return Some(format!("farm[{k}]"));
        }
        k -= self.n_farms;
        if k < self.lags {
            return Some(format!("lag[t-{}]", self.lags - k));
        }
        None
    }

    fn push_row(&self, ds: &WindowedDataset, i: usize, step: usize, out: &mut Vec<f64>) {
        out.extend_from_slice(ds.gfs(i, step));
        out.extend_from_slice(ds.arp(i, step));
        out.extend_from_slice(&ds.time(i, step));
        out.extend(ds.farm_one_hot(i));
        let lags = ds.lags(i);
        out.extend_from_slice(&lags[lags.len() - self.lags..]);
    }
}

/// One row per (sample, horizon step), sample-major. Targets in the same
/// order are `dataset.targets(i)[step]`.
pub fn tabular_features(dataset: &WindowedDataset, lags: usize) -> Result<(Matrix, TabularLayout)> {
    let layout = TabularLayout::of(dataset, lags)?;
    let h = dataset.horizon();
    let mut data = Vec::with_capacity(dataset.len() * h * layout.width());
    for i in 0..dataset.len() {
        for step in 0..h {
            layout.push_row(dataset, i, step, &mut data);
        }
    }
    Ok((Matrix::new(dataset.len() * h, layout.width(), data)?, layout))
}

/// One row per sample, using the exogenous features of horizon `step`.
pub fn tabular_step(dataset: &WindowedDataset, step: usize, lags: usize) -> Result<(Matrix, TabularLayout)> {
    let layout = TabularLayout::of(dataset, lags)?;
    if step >= dataset.horizon() {
        return Err(Error::param("step", format!("{step} beyond horizon {}", dataset.horizon())));
    }
    let mut data = Vec::with_capacity(dataset.len() * layout.width());
    for i in 0..dataset.len() {
        layout.push_row(dataset, i, step, &mut data);
    }
    Ok((Matrix::new(dataset.len(), layout.width(), data)?, layout))
}

#[cfg(test)]
mod tests {
    use alloc::sync::Arc;
    use alloc::vec;

    use super::super::{window_samples, FarmFrames, Hour};
    use super::*;

    fn dataset() -> WindowedDataset {
        let gs = GridShape::new(4, 4, 9);
        let asz = GridShape::new(5, 5, 11);
        let hours = 80;
        let f = FarmFrames {
            farm_id: 2,
            start: Hour(0),
            power: (0..hours).map(|i| i as f64).collect(),
            gfs: (0..hours * gs.cells()).map(|i| i as f64).collect(),
            arp: (0..hours * asz.cells()).map(|i| -(i as f64)).collect(),
            time: vec![[0.1, 0.2, 0.3, 0.4]; hours],
            gfs_shape: gs,
            arp_shape: asz,
        };
        window_samples(Arc::new(f), 48, 24, 1, 7).unwrap()
    }

    #[test]
    fn widths() {
        let d = dataset();
        let (m, l) = tabular_features(&d, 0).unwrap();
        assert_eq!(m.cols(), 430);
        assert_eq!(m.rows(), d.len() * 24);
        let (m, _) = tabular_features(&d, 48).unwrap();
        assert_eq!(m.cols(), 478);
        assert_eq!(l.column_name(430), None);
    }

    #[test]
    fn columns_map_back_to_sources() {
        let d = dataset();
        let (m, l) = tabular_features(&d, 48).unwrap();
        let (i, step) = (3, 7);
        let row = m.row(i * 24 + step);
        assert_eq!(l.column_name(0).unwrap(), "gfs[lat=0,lon=0,level=0]");
        assert_eq!(l.column_name(143).unwrap(), "gfs[lat=3,lon=3,level=8]");
        assert_eq!(l.column_name(144).unwrap(), "arpege[lat=0,lon=0,level=0]");
        assert_eq!(l.column_name(419).unwrap(), "moy_sin");
        assert_eq!(l.column_name(425).unwrap(), "farm[2]");
        assert_eq!(l.column_name(430).unwrap(), "lag[t-48]");
        assert_eq!(l.column_name(477).unwrap(), "lag[t-1]");
        assert_eq!(&row[..144], d.gfs(i, step));
        assert_eq!(&row[144..419], d.arp(i, step));
        assert_eq!(&row[419..423], &d.time(i, step));
        assert_eq!(row[425], 1.0);
        assert_eq!(row[477], d.targets(i)[0] - 1.0);
        let (s, _) = tabular_step(&d, step, 48).unwrap();
        assert_eq!(s.row(i), row);
    }
}
