use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Hour, PowerSeries};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NwpSource {
    Gfs,
    Arpege,
}

impl NwpSource {
    pub fn as_str(self) -> &'static str {
        match self {
            NwpSource::Gfs => "gfs",
            NwpSource::Arpege => "arpege",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NwpSourceSpec {
    pub name: NwpSource,
    pub cadence_hours: u32,
    pub lat_count: usize,
    pub lon_count: usize,
    pub raw_level_count: usize,
    pub selected_level_count: usize,
}

impl NwpSourceSpec {
    pub const fn gfs() -> Self {
        NwpSourceSpec {
            name: NwpSource::Gfs,
            cadence_hours: 3,
            lat_count: 4,
            lon_count: 4,
            raw_level_count: 24,
            selected_level_count: 9,
        }
    }

    pub const fn arpege() -> Self {
        NwpSourceSpec {
            name: NwpSource::Arpege,
            cadence_hours: 1,
            lat_count: 5,
            lon_count: 5,
            raw_level_count: 27,
            selected_level_count: 11,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cadence_hours == 0 || self.lat_count == 0 || self.lon_count == 0 || self.selected_level_count == 0 {
            return Err(Error::param("nwp source", format!("{:?} has a zero count", self.name)));
        }
        if self.selected_level_count > self.raw_level_count {
            return Err(Error::param(
                "nwp source",
                format!("{} selected levels > {} raw levels", self.selected_level_count, self.raw_level_count),
            ));
        }
        Ok(())
    }

    /// Values per timestamp in a raw cube.
    pub fn raw_cells(&self) -> usize {
        self.lat_count * self.lon_count * self.raw_level_count
    }
}

/// Wind components of one source for one farm, laid out `[time, lat, lon, level]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NwpCube {
    pub spec: NwpSourceSpec,
    pub timestamps: Vec<Hour>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl NwpCube {
    pub fn new(spec: NwpSourceSpec, timestamps: Vec<Hour>, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let n = timestamps.len() * spec.raw_cells();
        if u.len() != n || v.len() != n {
            return Err(Error::shape(
                "nwp cube",
                format!("{} timestamps x {} cells needs {n} values, got u={} v={}", timestamps.len(), spec.raw_cells(), u.len(), v.len()),
            ));
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("timestamps", "must be strictly increasing"));
        }
        Ok(NwpCube { spec, timestamps, u, v })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    #[inline]
    pub fn index(&self, t: usize, lat: usize, lon: usize, level: usize) -> usize {
        let s = &self.spec;
        ((t * s.lat_count + lat) * s.lon_count + lon) * s.raw_level_count + level
    }

    /// Wind-speed magnitude at every cell.
    pub fn speed(&self) -> Result<SpeedGrid> {
        Ok(SpeedGrid { spec: self.spec, timestamps: self.timestamps.clone(), data: wind_speed(&self.u, &self.v)? })
    }
}

/// Elementwise `sqrt(u^2 + v^2)`.
pub fn wind_speed(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(Error::shape("wind_speed", format!("u has {} values, v has {}", u.len(), v.len())));
    }
    Ok(u.iter().zip(v).map(|(&a, &b)| libm::hypot(a, b)).collect())
}

/// Wind speed on the raw grid, same layout as [`NwpCube`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedGrid {
    pub spec: NwpSourceSpec,
    pub timestamps: Vec<Hour>,
    pub data: Vec<f64>,
}

impl SpeedGrid {
    pub fn cells(&self) -> usize {
        self.spec.raw_cells()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let c = self.cells();
        &self.data[t * c..(t + 1) * c]
    }

    /// Spatial mean of `level` at time index `t`.
    pub fn level_mean(&self, t: usize, level: usize) -> f64 {
        let s = &self.spec;
        let frame = self.frame(t);
        let mut acc = 0.0;
        for cell in 0..s.lat_count * s.lon_count {
            acc += frame[cell * s.raw_level_count + level];
        }
        acc / (s.lat_count * s.lon_count) as f64
    }
}

/// Resample a coarse cube to hourly. Every hour without a reading takes the
/// mean of the nearest readings before and after it; hours past the last
/// reading (up to one cadence) repeat it. The result has cadence 1, so
/// interpolating again is a no-op.
pub fn interpolate_gfs(cube: &NwpCube) -> Result<NwpCube> {
    let cadence = cube.spec.cadence_hours as i64;
    if cube.len() < 2 {
        return Err(Error::InsufficientData(format!("{} readings, interpolation needs at least 2", cube.len())));
    }
    if let Some(ts) = cube.timestamps.iter().find(|t| t.0.rem_euclid(cadence) != 0) {
        return Err(Error::param("timestamps", format!("{} is off the {cadence}-hour cadence", ts.iso())));
    }
    let cells = cube.spec.raw_cells();
    let first = cube.timestamps[0];
    let last = cube.timestamps[cube.len() - 1].plus(cadence - 1);
    let hours = (last.0 - first.0 + 1) as usize;
    let mut timestamps = Vec::with_capacity(hours);
    let mut u = Vec::with_capacity(hours * cells);
    let mut v = Vec::with_capacity(hours * cells);
    let mut next = 0usize; // index of the first reading at or after the current hour
    for k in 0..hours {
        let ts = first.plus(k as i64);
        while next < cube.len() && cube.timestamps[next] < ts {
            next += 1;
        }
        let range = |i: usize| i * cells..(i + 1) * cells;
        if next < cube.len() && cube.timestamps[next] == ts {
            u.extend_from_slice(&cube.u[range(next)]);
            v.extend_from_slice(&cube.v[range(next)]);
        } else if next >= cube.len() {
            let prev = cube.len() - 1;
            u.extend_from_slice(&cube.u[range(prev)]);
            v.extend_from_slice(&cube.v[range(prev)]);
        } else {
            let (a, b) = (range(next - 1), range(next));
            u.extend(cube.u[a.clone()].iter().zip(&cube.u[b.clone()]).map(|(x, y)| 0.5 * (x + y)));
            v.extend(cube.v[a].iter().zip(&cube.v[b]).map(|(x, y)| 0.5 * (x + y)));
        }
        timestamps.push(ts);
    }
    let spec = NwpSourceSpec { cadence_hours: 1, ..cube.spec };
    NwpCube::new(spec, timestamps, u, v)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / libm::sqrt(sxx * syy)
}

/// Rank levels by |Pearson r| between their spatially averaged speed and
/// power, using only timestamps before `fit_until`, and return the top `k`
/// (best first, ties to the lower level). Zero-variance levels score 0.
pub fn select_levels_by_correlation(
    speed: &SpeedGrid,
    power: &PowerSeries,
    k: usize,
    fit_until: Hour,
) -> Result<Vec<usize>> {
    let levels = speed.spec.raw_level_count;
    if k == 0 || k > levels {
        return Err(Error::param("k", format!("{k} levels requested from {levels}")));
    }
    // Align on shared timestamps; both series are sorted.
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < speed.timestamps.len() && j < power.timestamps.len() {
        let (a, b) = (speed.timestamps[i], power.timestamps[j]);
        if a >= fit_until || b >= fit_until {
            break;
        }
        match a.cmp(&b) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                pairs.push((i, j));
                i += 1;
                j += 1;
            }
        }
    }
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!("{} overlapping training hours for level selection", pairs.len())));
    }
    let p: Vec<f64> = pairs.iter().map(|&(_, j)| power.power[j]).collect();
    let mut scored: Vec<(usize, f64)> = (0..levels)
        .map(|l| {
            let s: Vec<f64> = pairs.iter().map(|&(i, _)| speed.level_mean(i, l)).collect();
            (l, libm::fabs(pearson(&s, &p)))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k).map(|(l, _)| l).collect())
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn spec(levels: usize, cadence: u32) -> NwpSourceSpec {
        NwpSourceSpec {
            name: NwpSource::Gfs,
            cadence_hours: cadence,
            lat_count: 1,
            lon_count: 1,
            raw_level_count: levels,
            selected_level_count: 1,
        }
    }

    #[test]
    fn wind_speed_examples() {
        assert_eq!(wind_speed(&[3.0], &[4.0]).unwrap(), vec![5.0]);
        assert_eq!(wind_speed(&[0.0], &[0.0]).unwrap(), vec![0.0]);
        assert!((wind_speed(&[1.0], &[1.0]).unwrap()[0] - core::f64::consts::SQRT_2).abs() < 1e-12);
        assert!(wind_speed(&[1.0], &[]).is_err());
    }

    #[test]
    fn source_specs_validate() {
        assert!(NwpSourceSpec::gfs().validate().is_ok());
        assert!(NwpSourceSpec::arpege().validate().is_ok());
        let bad = NwpSourceSpec { selected_level_count: 30, ..NwpSourceSpec::gfs() };
        assert!(bad.validate().is_err());
    }

    fn oracle_fill(ts: &[i64], vals: &[f64], hour: i64) -> f64 {
        // nearest reading at or before, nearest at or after
        let before = ts.iter().rposition(|&t| t <= hour);
        let after = ts.iter().position(|&t| t >= hour);
        match (before, after) {
            (Some(b), Some(_)) if ts[b] == hour => vals[b],
            (Some(b), Some(a)) => (vals[b] + vals[a]) / 2.0,
            (Some(b), None) => vals[b],
            (None, Some(a)) => vals[a],
            (None, None) => unreachable!(),
        }
    }

    #[test]
    fn fills_between_readings_with_neighbor_mean() {
        let cube = NwpCube::new(spec(1, 3), vec![Hour(0), Hour(3)], vec![10.0, 16.0], vec![0.0, 0.0]).unwrap();
        let hourly = interpolate_gfs(&cube).unwrap();
        assert_eq!(hourly.timestamps, (0..6).map(Hour).collect::<Vec<_>>());
        assert_eq!(hourly.u, vec![10.0, 13.0, 13.0, 16.0, 16.0, 16.0]);
        for h in 0..6 {
            assert_eq!(hourly.u[h as usize], oracle_fill(&[0, 3], &[10.0, 16.0], h));
        }
    }

    #[test]
    fn matches_oracle_with_gaps_and_preserves_readings() {
        let ts = [0i64, 3, 6, 12, 15];
        let vals = [1.0, 4.0, -2.0, 7.5, 0.25];
        let cube = NwpCube::new(spec(1, 3), ts.iter().map(|&t| Hour(t)).collect(), vals.to_vec(), vals.to_vec()).unwrap();
        let hourly = interpolate_gfs(&cube).unwrap();
        for (k, h) in hourly.timestamps.iter().enumerate() {
            assert_eq!(hourly.u[k], oracle_fill(&ts, &vals, h.0));
        }
        for (t, v) in ts.iter().zip(vals) {
            assert_eq!(hourly.u[*t as usize], v);
        }
        assert_eq!(interpolate_gfs(&hourly).unwrap(), hourly);
    }

    #[test]
    fn constant_series_stays_constant() {
        let ts: Vec<Hour> = (0..5).map(|k| Hour(3 * k)).collect();
        let cube = NwpCube::new(spec(2, 3), ts, vec![2.0; 10], vec![-1.0; 10]).unwrap();
        let hourly = interpolate_gfs(&cube).unwrap();
        assert!(hourly.u.iter().all(|&x| x == 2.0) && hourly.v.iter().all(|&x| x == -1.0));
    }

    #[test]
    fn interpolation_errors() {
        let one = NwpCube::new(spec(1, 3), vec![Hour(0)], vec![1.0], vec![1.0]).unwrap();
        assert!(interpolate_gfs(&one).is_err());
        let off = NwpCube::new(spec(1, 3), vec![Hour(0), Hour(4)], vec![1.0; 2], vec![1.0; 2]).unwrap();
        assert!(interpolate_gfs(&off).is_err());
    }

    fn speed_grid(levels: &[Vec<f64>]) -> SpeedGrid {
        let n = levels[0].len();
        let mut data = Vec::new();
        for t in 0..n {
            for l in levels {
                data.push(l[t]);
            }
        }
        SpeedGrid { spec: spec(levels.len(), 1), timestamps: (0..n as i64).map(Hour).collect(), data }
    }

    fn series(p: &[f64]) -> PowerSeries {
        PowerSeries::new(0, (0..p.len() as i64).map(Hour).collect(), p.to_vec()).unwrap()
    }

    #[test]
    fn affine_level_ranks_first_and_full_k_returns_all() {
        let n = 50;
        let mut levels = Vec::new();
        for l in 0..8 {
            levels.push((0..n).map(|t| libm::sin(t as f64 * (0.3 + 0.11 * l as f64)) + l as f64).collect::<Vec<_>>());
        }
        let power: Vec<f64> = levels[5].iter().map(|s| 3.0 * s - 1.0).collect();
        let grid = speed_grid(&levels);
        let ps = series(&power);
        let top = select_levels_by_correlation(&grid, &ps, 3, Hour(1000)).unwrap();
        assert_eq!(top[0], 5);
        let mut all = select_levels_by_correlation(&grid, &ps, 8, Hour(1000)).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        assert!(select_levels_by_correlation(&grid, &ps, 9, Hour(1000)).is_err());
    }

    #[test]
    fn constant_level_scores_zero() {
        let n = 30;
        let varying: Vec<f64> = (0..n).map(|t| (t % 7) as f64).collect();
        let constant = vec![4.0; n];
        let grid = speed_grid(&[constant, varying.clone()]);
        let ps = series(&varying.iter().map(|v| v * 0.1 + libm::sin(*v)).collect::<Vec<_>>());
        assert_eq!(select_levels_by_correlation(&grid, &ps, 1, Hour(1000)).unwrap(), vec![1]);
    }

    #[test]
    fn selection_ignores_hours_after_cutoff() {
        // level 0 tracks power before hour 20, level 1 after
        let n = 40;
        let p: Vec<f64> = (0..n).map(|t| libm::sin(t as f64 * 0.7)).collect();
        let l0: Vec<f64> = (0..n).map(|t| if t < 20 { p[t] } else { 0.3 * libm::cos(t as f64) }).collect();
        let l1: Vec<f64> = (0..n).map(|t| if t < 20 { 0.3 * libm::cos(t as f64 * 1.3) } else { p[t] * 100.0 }).collect();
        let grid = speed_grid(&[l0, l1]);
        assert_eq!(select_levels_by_correlation(&grid, &series(&p), 1, Hour(20)).unwrap(), vec![0]);
    }

    fn oracle_r(x: &[f64], y: &[f64]) -> f64 {
        // textbook one-pass sums
        let n = x.len() as f64;
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn planted_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 5000;
        let p: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut levels = Vec::new();
        for r in [0.1, 0.9, 0.5] {
            let s = (1.0f64 - r * r).sqrt();
            levels.push(p.iter().map(|&x| 5.0 + r * x + s * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>());
        }
        let grid = speed_grid(&levels);
        let ps = series(&p);
        let mut oracle: Vec<(usize, f64)> = levels.iter().enumerate().map(|(l, x)| (l, oracle_r(x, &p).abs())).collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let expected: Vec<usize> = oracle.iter().take(2).map(|o| o.0).collect();
        assert_eq!(expected, vec![1, 2]);
        assert_eq!(select_levels_by_correlation(&grid, &ps, 2, Hour(i64::MAX)).unwrap(), expected);
    }
}
