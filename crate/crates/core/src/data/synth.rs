use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Hour, NwpCube, NwpSourceSpec, PowerSeries};
use crate::{Error, Result};

/// Knobs of the synthetic weather and power generator. Speeds in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub days: usize,
    pub start: Hour,
    pub gfs: NwpSourceSpec,
    pub arpege: NwpSourceSpec,
    /// Share of weather variance common to all farms of one seed.
    pub shared_weight: f64,
    pub base_speed: f64,
    pub seasonal_amplitude: f64,
    pub diurnal_amplitude: f64,
    /// Stationary standard deviation of the weather process.
    pub weather_sd: f64,
    /// Hourly persistence of the weather process.
    pub persistence: f64,
    /// Static per-cell speed factor spread.
    pub cell_spread: f64,
    /// Per-hour noise on every grid value.
    pub cell_noise: f64,
    /// Extra noise per level of distance from the hub level.
    pub level_noise: f64,
    /// Additional noise on the GFS fields.
    pub gfs_noise: f64,
    /// Power noise as a fraction of capacity.
    pub power_noise: f64,
    pub cut_in: f64,
    pub rated: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            days: 365,
            start: Hour::from_ymdh(2018, 1, 1, 0).expect("valid date"),
            gfs: NwpSourceSpec::gfs(),
            arpege: NwpSourceSpec::arpege(),
            shared_weight: 0.6,
            base_speed: 6.5,
            seasonal_amplitude: 1.5,
            diurnal_amplitude: 1.0,
            weather_sd: 2.5,
            persistence: 0.97,
            cell_spread: 0.05,
            cell_noise: 0.3,
            level_noise: 0.15,
            gfs_noise: 0.5,
            power_noise: 0.03,
            cut_in: 3.0,
            rated: 13.0,
        }
    }
}

impl SynthConfig {
    /// Small grids with few levels, for quick runs.
    pub fn small() -> Self {
        SynthConfig {
            gfs: NwpSourceSpec { lat_count: 2, lon_count: 2, raw_level_count: 6, selected_level_count: 3, ..NwpSourceSpec::gfs() },
            arpege: NwpSourceSpec {
                lat_count: 3,
                lon_count: 3,
                raw_level_count: 8,
                selected_level_count: 4,
                ..NwpSourceSpec::arpege()
            },
            ..SynthConfig::default()
        }
    }

    /// No noise anywhere: power is a fixed function of the hub-level speed.
    pub fn noiseless(self) -> Self {
        SynthConfig { cell_noise: 0.0, level_noise: 0.0, gfs_noise: 0.0, power_noise: 0.0, ..self }
    }

    pub fn capacity(farm_id: usize) -> f64 {
        20.0 + 7.0 * farm_id as f64
    }

    /// Normalized power curve: zero below cut-in, cubic up to rated, flat above.
    pub fn power_curve(&self, speed: f64) -> f64 {
        if speed <= self.cut_in {
            0.0
        } else if speed >= self.rated {
            1.0
        } else {
            let c3 = self.cut_in * self.cut_in * self.cut_in;
            (speed * speed * speed - c3) / (self.rated * self.rated * self.rated - c3)
        }
    }

    pub fn hub_level(spec: &NwpSourceSpec) -> usize {
        spec.raw_level_count / 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFarm {
    pub power: PowerSeries,
    pub gfs: NwpCube,
    pub arpege: NwpCube,
}

struct Ar1 {
    value: f64,
    coef: f64,
    innovation_sd: f64,
}

impl Ar1 {
    fn new(coef: f64, sd: f64, rng: &mut ChaCha8Rng) -> Self {
        let value = sd * rng.sample::<f64, _>(StandardNormal);
        Ar1 { value, coef, innovation_sd: sd * libm::sqrt(1.0 - coef * coef) }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        self.value = self.coef * self.value + self.innovation_sd * rng.sample::<f64, _>(StandardNormal);
        self.value
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

struct GridGen {
    spec: NwpSourceSpec,
    factors: Vec<f64>,
    hub: usize,
    bias: f64,
    extra_noise: f64,
}

impl GridGen {
    fn new(spec: NwpSourceSpec, bias: f64, extra_noise: f64, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let factors = (0..spec.lat_count * spec.lon_count).map(|_| 1.0 + cfg.cell_spread * normal(rng)).collect();
        GridGen { spec, factors, hub: SynthConfig::hub_level(&spec), bias, extra_noise }
    }

    fn emit(&self, hub_speed: f64, direction: f64, cfg: &SynthConfig, rng: &mut ChaCha8Rng, u: &mut Vec<f64>, v: &mut Vec<f64>) {
        let levels = self.spec.raw_level_count;
        for f in &self.factors {
            for l in 0..levels {
                let shear = libm::pow((l + 1) as f64 / (self.hub + 1) as f64, 0.14);
                let dist = (l as f64 - self.hub as f64).abs();
                let noise_sd = cfg.cell_noise + cfg.level_noise * dist + self.extra_noise;
                let noise = if noise_sd > 0.0 { noise_sd * normal(rng) } else { 0.0 };
                let s = (self.bias * hub_speed * shear * f + noise).max(0.0);
                let angle = direction + 0.01 * l as f64;
                u.push(s * libm::cos(angle));
                v.push(s * libm::sin(angle));
            }
        }
    }
}

/// Deterministic synthetic farm. Farms generated with the same seed share
/// part of their weather, so their power series are correlated.
pub fn generate_synthetic_farm(seed: u64, farm_id: usize, cfg: &SynthConfig) -> Result<SyntheticFarm> {
    if cfg.days < 10 {
        return Err(Error::param("days", format!("{} days, need at least 10", cfg.days)));
    }
    if !(0.0..=1.0).contains(&cfg.shared_weight) || !(0.0..1.0).contains(&cfg.persistence) {
        return Err(Error::param("synth", "shared_weight must be in [0, 1] and persistence in [0, 1)"));
    }
    if cfg.rated <= cfg.cut_in {
        return Err(Error::param("rated", "must exceed cut_in"));
    }
    cfg.gfs.validate()?;
    cfg.arpege.validate()?;
    if cfg.arpege.cadence_hours != 1 {
        return Err(Error::param("arpege", "synthetic ARPEGE fields are hourly"));
    }

    let mut shared_rng = ChaCha8Rng::seed_from_u64(seed);
    shared_rng.set_stream(0);
    let mut farm_rng = ChaCha8Rng::seed_from_u64(seed);
    farm_rng.set_stream(1 + farm_id as u64);

    let (ws, wf) = (libm::sqrt(cfg.shared_weight), libm::sqrt(1.0 - cfg.shared_weight));
    let mut shared = Ar1::new(cfg.persistence, cfg.weather_sd, &mut shared_rng);
    let mut local = Ar1::new(cfg.persistence, cfg.weather_sd, &mut farm_rng);
    let mut shared_dir = Ar1::new(0.995, 1.0, &mut shared_rng);
    let mut local_dir = Ar1::new(0.995, 0.5, &mut farm_rng);
    let site_bias = 0.5 * normal(&mut farm_rng);

    let arp_gen = GridGen::new(cfg.arpege, 1.0, 0.0, cfg, &mut farm_rng);
    let gfs_gen = GridGen::new(cfg.gfs, 0.95, cfg.gfs_noise, cfg, &mut farm_rng);
    let arp_hub = arp_gen.hub;
    let arp_cells = cfg.arpege.lat_count * cfg.arpege.lon_count;

    let hours = cfg.days * 24;
    let cadence = cfg.gfs.cadence_hours as i64;
    let capacity = SynthConfig::capacity(farm_id);
    let (mut arp_u, mut arp_v) = (Vec::with_capacity(hours * cfg.arpege.raw_cells()), Vec::new());
    arp_v.reserve(hours * cfg.arpege.raw_cells());
    let (mut gfs_u, mut gfs_v, mut gfs_ts) = (Vec::new(), Vec::new(), Vec::new());
    let mut timestamps = Vec::with_capacity(hours);
    let mut power = Vec::with_capacity(hours);

    for k in 0..hours {
        let ts = cfg.start.plus(k as i64);
        let weather = ws * shared.step(&mut shared_rng) + wf * local.step(&mut farm_rng);
        let direction = shared_dir.step(&mut shared_rng) + local_dir.step(&mut farm_rng);
        let season = cfg.seasonal_amplitude * libm::cos(2.0 * PI * (ts.day_of_year() as f64 - 15.0) / 365.25);
        let diurnal = cfg.diurnal_amplitude * libm::cos(2.0 * PI * (ts.hour_of_day() as f64 - 2.0) / 24.0);
        let hub = (cfg.base_speed + site_bias + season + diurnal + weather).max(0.0);

        let offset = arp_u.len();
        arp_gen.emit(hub, direction, cfg, &mut farm_rng, &mut arp_u, &mut arp_v);
        let mut hub_mean = 0.0;
        for c in 0..arp_cells {
            let i = offset + c * cfg.arpege.raw_level_count + arp_hub;
            hub_mean += libm::hypot(arp_u[i], arp_v[i]);
        }
        hub_mean /= arp_cells as f64;

        if ts.0.rem_euclid(cadence) == 0 {
            gfs_gen.emit(hub, direction, cfg, &mut farm_rng, &mut gfs_u, &mut gfs_v);
            gfs_ts.push(ts);
        }

        let noise = if cfg.power_noise > 0.0 { cfg.power_noise * normal(&mut farm_rng) } else { 0.0 };
        power.push(capacity * (cfg.power_curve(hub_mean) + noise).clamp(0.0, 1.0));
        timestamps.push(ts);
    }

    Ok(SyntheticFarm {
        power: PowerSeries::new(farm_id, timestamps.clone(), power)?,
        gfs: NwpCube::new(cfg.gfs, gfs_ts, gfs_u, gfs_v)?,
        arpege: NwpCube::new(cfg.arpege, timestamps, arp_u, arp_v)?,
    })
}
