use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::WindowedDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_days: usize,
    pub val_fraction: f64,
    pub merge_after_tuning: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { test_days: 120, val_fraction: 0.10, merge_after_tuning: true }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

impl Split {
    /// Training and validation rows together, for the final refit.
    pub fn merged(&self) -> WindowedDataset {
        let n_train = self.train.len();
        let mut idx: Vec<usize> = (0..n_train).collect();
        let joined = super::concat_farms_global(&[self.train.clone(), self.val.clone()]).expect("same dataset layout");
        idx.extend(n_train..n_train + self.val.len());
        // keep each farm's rows chronological
        idx.sort_by_key(|&i| (joined.farm(i), joined.sample_time(i)));
        joined.subset(&idx)
    }
}

/// Per farm: the last `test_days` non-overlapping windows form the test set,
/// windows whose targets end before the first test hour form the pool, the
/// chronologically last `val_fraction` of the pool is validation and the
/// rest is training. Windows straddling the test start are dropped.
pub fn split_train_val_test(dataset: &WindowedDataset, spec: &SplitSpec) -> Result<Split> {
    if !(0.0..1.0).contains(&spec.val_fraction) {
        return Err(Error::param("val_fraction", format!("{} outside [0, 1)", spec.val_fraction)));
    }
    if spec.test_days == 0 {
        return Err(Error::param("test_days", "must be positive"));
    }
    let h = dataset.horizon() as i64;
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for farm in dataset.farm_ids() {
        let mut idx = dataset.farm_indices(farm);
        idx.sort_by_key(|&i| dataset.sample_time(i));

        let mut picked = Vec::with_capacity(spec.test_days);
        let mut bound = i64::MAX;
        for &i in idx.iter().rev() {
            if picked.len() == spec.test_days {
                break;
            }
            let t = dataset.sample_time(i).0;
            if t + h - 1 < bound {
                picked.push(i);
                bound = t;
            }
        }
        if picked.len() < spec.test_days {
            return Err(Error::InsufficientData(format!(
                "farm {farm}: {} non-overlapping test windows, need {}",
                picked.len(),
                spec.test_days
            )));
        }
        picked.reverse();
        let test_start = dataset.sample_time(picked[0]).0;
        let pool: Vec<usize> = idx.into_iter().filter(|&i| dataset.sample_time(i).0 + h - 1 < test_start).collect();
        let n_val = libm::round(pool.len() as f64 * spec.val_fraction) as usize;
        if pool.len() <= n_val {
            return Err(Error::InsufficientData(format!("farm {farm}: no training windows before the test period")));
        }
        let (tr, va) = pool.split_at(pool.len() - n_val);
        train.extend_from_slice(tr);
        val.extend_from_slice(va);
        test.extend(picked);
    }
    Ok(Split { train: dataset.subset(&train), val: dataset.subset(&val), test: dataset.subset(&test) })
}

#[cfg(test)]
mod tests {
    use alloc::sync::Arc;

    use super::super::{window_samples, FarmFrames, GridShape, Hour};
    use super::*;

    fn dataset(days: usize, stride: usize) -> WindowedDataset {
        let hours = 48 + days * 24;
        let f = FarmFrames {
            farm_id: 0,
            start: Hour(0),
            power: alloc::vec![0.5; hours],
            gfs: alloc::vec![0.0; hours],
            arp: alloc::vec![0.0; hours],
            time: alloc::vec![[0.0; 4]; hours],
            gfs_shape: GridShape::new(1, 1, 1),
            arp_shape: GridShape::new(1, 1, 1),
        };
        window_samples(Arc::new(f), 48, 24, stride, 7).unwrap()
    }

    #[test]
    fn twelve_hundred_daily_samples() {
        let d = dataset(1200, 24);
        assert_eq!(d.len(), 1200);
        let s = split_train_val_test(&d, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (972, 108, 120));
        let max_train = (0..s.train.len()).map(|i| s.train.sample_time(i)).max().unwrap();
        let min_val = (0..s.val.len()).map(|i| s.val.sample_time(i)).min().unwrap();
        let min_test = (0..s.test.len()).map(|i| s.test.sample_time(i)).min().unwrap();
        assert!(max_train < min_val && min_val < min_test);
        assert_eq!(s.merged().len(), 1080);
    }

    #[test]
    fn hourly_stride_drops_straddling_windows() {
        let d = dataset(130, 1);
        let s = split_train_val_test(&d, &SplitSpec::default()).unwrap();
        assert_eq!(s.test.len(), 120);
        for w in 1..120 {
            assert_eq!(s.test.sample_time(w).0 - s.test.sample_time(w - 1).0, 24);
        }
        let test_start = s.test.sample_time(0).0;
        for part in [&s.train, &s.val] {
            for i in 0..part.len() {
                assert!(part.target_time(i, 23).0 < test_start);
            }
        }
    }

    #[test]
    fn too_little_data() {
        assert!(split_train_val_test(&dataset(100, 24), &SplitSpec::default()).is_err());
        assert!(split_train_val_test(&dataset(120, 24), &SplitSpec::default()).is_err());
    }
}
