use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    cyclic_time_features, fill_short_gaps, interpolate_gfs, select_levels_by_correlation, window_samples,
    concat_farms_global, FarmFrames, GridShape, Hour, MinMax, NwpCube, PowerSeries, SpeedGrid, WindowedDataset,
    FARMS, HORIZON, LOOKBACK,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub lookback: usize,
    pub horizon: usize,
    /// Hours between consecutive window starts.
    pub stride: usize,
    /// Length of the held-out tail; anchors are fitted on the hours before it.
    pub test_days: usize,
    pub month_period: f64,
    /// Longest run of missing hours that is filled rather than split on.
    pub max_gap: usize,
    pub gfs_levels: usize,
    pub arp_levels: usize,
    pub n_farms: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            lookback: LOOKBACK,
            horizon: HORIZON,
            stride: 1,
            test_days: 120,
            month_period: 12.0,
            max_gap: 3,
            gfs_levels: 9,
            arp_levels: 11,
            n_farms: FARMS,
        }
    }
}

/// Everything fitted on the training range of one farm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmAnchors {
    pub farm_id: usize,
    /// Statistics use only hours strictly before this one.
    pub fit_until: Hour,
    pub power: MinMax,
    /// Selected levels in channel order (ascending level index).
    pub gfs_levels: Vec<usize>,
    pub arp_levels: Vec<usize>,
    pub gfs_channels: Vec<MinMax>,
    pub arp_channels: Vec<MinMax>,
}

impl FarmAnchors {
    /// Fail if any target hour of `test` falls inside the fitting range.
    pub fn check_no_leakage(&self, test: &WindowedDataset) -> Result<()> {
        for i in 0..test.len() {
            if test.farm(i) == self.farm_id && test.sample_time(i) < self.fit_until {
                return Err(Error::Config(format!(
                    "farm {}: test target {} precedes the fitting cutoff {}",
                    self.farm_id,
                    test.sample_time(i).iso(),
                    self.fit_until.iso()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PreparedFarm {
    pub anchors: FarmAnchors,
    pub dataset: WindowedDataset,
}

fn hour_index(ts: &[Hour], h: Hour) -> Option<usize> {
    ts.binary_search(&h).ok()
}

fn channel_anchors(speed: &SpeedGrid, levels: &[usize], fit_until: Hour) -> Result<Vec<MinMax>> {
    let s = &speed.spec;
    let fit_end = speed.timestamps.partition_point(|&t| t < fit_until);
    levels
        .iter()
        .map(|&l| {
            let vals: Vec<f64> = (0..fit_end)
                .flat_map(|t| (0..s.lat_count * s.lon_count).map(move |c| (t, c)))
                .map(|(t, c)| speed.frame(t)[c * s.raw_level_count + l])
                .collect();
            MinMax::fit(&vals).map_err(|e| Error::Undefined(format!("{} level {l}: {e}", s.name.as_str())))
        })
        .collect()
}

fn push_grid(speed: &SpeedGrid, t: usize, levels: &[usize], anchors: &[MinMax], out: &mut Vec<f64>) {
    let s = &speed.spec;
    let frame = speed.frame(t);
    for cell in 0..s.lat_count * s.lon_count {
        for (&l, mm) in levels.iter().zip(anchors) {
            out.push(mm.transform(frame[cell * s.raw_level_count + l]));
        }
    }
}

/// Start hour, power values, GFS rows and ARPEGE rows of one stretch.
type Stretch = (Hour, Vec<f64>, Vec<usize>, Vec<usize>);

/// Full preprocessing for one farm: hourly GFS, gap handling, fitting of
/// every statistic on the pre-test hours, level selection, normalization and
/// windowing of each gap-free stretch.
pub fn prepare_farm(power: &PowerSeries, gfs: &NwpCube, arpege: &NwpCube, cfg: &PrepConfig) -> Result<PreparedFarm> {
    if power.farm_id >= cfg.n_farms {
        return Err(Error::param("farm_id", format!("farm {} with {} farms configured", power.farm_id, cfg.n_farms)));
    }
    let gfs_h = if gfs.spec.cadence_hours > 1 { interpolate_gfs(gfs)? } else { gfs.clone() };
    if arpege.spec.cadence_hours != 1 {
        return Err(Error::param("arpege", "expected an hourly source"));
    }
    let gfs_s = gfs_h.speed()?;
    let arp_s = arpege.speed()?;

    // Stretches where power (after gap filling) and both grids exist.
    let segments = fill_short_gaps(&power.timestamps, &power.power, cfg.max_gap)?;
    let mut runs: Vec<Stretch> = Vec::new();
    for seg in &segments {
        let mut open = false;
        for (k, &p) in seg.values.iter().enumerate() {
            let h = seg.start.plus(k as i64);
            match (hour_index(&gfs_s.timestamps, h), hour_index(&arp_s.timestamps, h)) {
                (Some(gi), Some(ai)) => {
                    if !open {
                        runs.push((h, Vec::new(), Vec::new(), Vec::new()));
                        open = true;
                    }
                    let r = runs.last_mut().expect("opened above");
                    r.1.push(p);
                    r.2.push(gi);
                    r.3.push(ai);
                }
                _ => open = false,
            }
        }
    }
    let min_len = cfg.lookback + cfg.horizon;
    runs.retain(|r| r.1.len() >= min_len);
    let last = runs
        .last()
        .map(|r| r.0.plus(r.1.len() as i64 - 1))
        .ok_or_else(|| Error::InsufficientData(format!("farm {}: no stretch of {min_len} aligned hours", power.farm_id)))?;
    let fit_until = last.plus(1 - (cfg.test_days * 24) as i64);

    // observed values only: a filled gap may reach past the cutoff
    let fit: Vec<f64> = power.timestamps.iter().zip(&power.power).filter(|(h, _)| **h < fit_until).map(|(_, &p)| p).collect();
    let power_mm = MinMax::fit(&fit).map_err(|e| Error::InsufficientData(format!("farm {} power: {e}", power.farm_id)))?;

    // interpolated hours after the last raw GFS stamp before the cutoff
    // lean on the next stamp, so GFS statistics stop at that stamp
    let gfs_until = gfs
        .timestamps
        .iter()
        .rev()
        .find(|&&t| t < fit_until)
        .map(|t| t.plus(1))
        .ok_or_else(|| Error::InsufficientData(format!("farm {}: no GFS run before the test period", power.farm_id)))?;
    let mut gfs_levels = select_levels_by_correlation(&gfs_s, power, cfg.gfs_levels, gfs_until)?;
    let mut arp_levels = select_levels_by_correlation(&arp_s, power, cfg.arp_levels, fit_until)?;
    gfs_levels.sort_unstable();
    arp_levels.sort_unstable();
    let gfs_channels = channel_anchors(&gfs_s, &gfs_levels, gfs_until)?;
    let arp_channels = channel_anchors(&arp_s, &arp_levels, fit_until)?;

    let gfs_shape = GridShape::new(gfs.spec.lat_count, gfs.spec.lon_count, gfs_levels.len());
    let arp_shape = GridShape::new(arpege.spec.lat_count, arpege.spec.lon_count, arp_levels.len());
    let mut parts = Vec::with_capacity(runs.len());
    for (start, values, gi, ai) in runs {
        let n = values.len();
        let mut frames = FarmFrames {
            farm_id: power.farm_id,
            start,
            power: values.iter().map(|&p| power_mm.transform(p)).collect(),
            gfs: Vec::with_capacity(n * gfs_shape.cells()),
            arp: Vec::with_capacity(n * arp_shape.cells()),
            time: (0..n).map(|k| cyclic_time_features(start.plus(k as i64), cfg.month_period)).collect(),
            gfs_shape,
            arp_shape,
        };
        for k in 0..n {
            push_grid(&gfs_s, gi[k], &gfs_levels, &gfs_channels, &mut frames.gfs);
            push_grid(&arp_s, ai[k], &arp_levels, &arp_channels, &mut frames.arp);
        }
        parts.push(window_samples(Arc::new(frames), cfg.lookback, cfg.horizon, cfg.stride, cfg.n_farms)?);
    }
    let dataset = concat_farms_global(&parts)?;
    let anchors =
        FarmAnchors { farm_id: power.farm_id, fit_until, power: power_mm, gfs_levels, arp_levels, gfs_channels, arp_channels };
    Ok(PreparedFarm { anchors, dataset })
}
