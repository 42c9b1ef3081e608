//! Raw data files: hourly power CSV, long-form NWP CSV and the dataset
//! manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use gustcast_core::data::{FarmAnchors, Hour, NwpCube, NwpSourceSpec, PowerSeries, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

pub fn parse_timestamp(s: &str) -> Option<Hour> {
    let dt = DateTime::parse_from_rfc3339(s)
        .map(|d| d.naive_utc())
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()?;
    let h = Hour::from_naive(dt);
    (h.to_naive() == dt).then_some(h)
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| CliError::csv(path, e))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers().map_err(|e| CliError::csv(path, e))?;
    if h.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(CliError::format(path, format!("expected header `{}`, found `{}`", expected.join(","), h.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| CliError::format(path, format!("line {line}: missing column {i}")))?;
    raw.trim().parse().map_err(|_| CliError::format(path, format!("line {line}: cannot parse `{raw}`")))
}

fn stamp(path: &Path, rec: &csv::StringRecord, line: u64) -> Result<Hour> {
    let raw = rec.get(0).unwrap_or("");
    parse_timestamp(raw.trim()).ok_or_else(|| CliError::format(path, format!("line {line}: bad timestamp `{raw}`")))
}

pub fn write_power_csv(path: &Path, series: &PowerSeries) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "timestamp,power").map_err(io)?;
    for (t, p) in series.timestamps.iter().zip(&series.power) {
        writeln!(w, "{},{}", t.iso(), p).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_power_csv(path: &Path, farm_id: usize) -> Result<PowerSeries> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["timestamp", "power"])?;
    let (mut ts, mut power) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        ts.push(stamp(path, &rec, line)?);
        power.push(field::<f64>(path, &rec, 1, line)?);
    }
    PowerSeries::new(farm_id, ts, power).map_err(|e| CliError::format(path, e.to_string()))
}

/// Rows ordered by timestamp, then latitude, longitude and level.
pub fn write_nwp_csv(path: &Path, cube: &NwpCube) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    let s = &cube.spec;
    writeln!(w, "timestamp,level,lat_idx,lon_idx,u,v").map_err(io)?;
    for (t, ts) in cube.timestamps.iter().enumerate() {
        let iso = ts.iso();
        for lat in 0..s.lat_count {
            for lon in 0..s.lon_count {
                for level in 0..s.raw_level_count {
                    let i = cube.index(t, lat, lon, level);
                    writeln!(w, "{iso},{level},{lat},{lon},{},{}", cube.u[i], cube.v[i]).map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}

/// Rows may come in any order within a timestamp, but timestamps must be
/// non-decreasing and every (lat, lon, level) present exactly once.
pub fn read_nwp_csv(path: &Path, spec: NwpSourceSpec) -> Result<NwpCube> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["timestamp", "level", "lat_idx", "lon_idx", "u", "v"])?;
    let cells = spec.raw_cells();
    let (mut ts, mut u, mut v): (Vec<Hour>, Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new(), Vec::new());
    let mut seen: Vec<bool> = Vec::new();
    let mut rec = csv::StringRecord::new();
    let mut line = 1u64;
    while rdr.read_record(&mut rec).map_err(|e| CliError::csv(path, e))? {
        line += 1;
        let t = stamp(path, &rec, line)?;
        if ts.last() != Some(&t) {
            if ts.last().is_some_and(|&last| t < last) {
                return Err(CliError::format(path, format!("line {line}: timestamps go backwards")));
            }
            ts.push(t);
            u.resize(ts.len() * cells, 0.0);
            v.resize(ts.len() * cells, 0.0);
            seen.resize(ts.len() * cells, false);
        }
        let level: usize = field(path, &rec, 1, line)?;
        let lat: usize = field(path, &rec, 2, line)?;
        let lon: usize = field(path, &rec, 3, line)?;
        if level >= spec.raw_level_count || lat >= spec.lat_count || lon >= spec.lon_count {
            return Err(CliError::format(path, format!("line {line}: index outside the {:?} grid", spec.name)));
        }
        let i = (((ts.len() - 1) * spec.lat_count + lat) * spec.lon_count + lon) * spec.raw_level_count + level;
        if std::mem::replace(&mut seen[i], true) {
            return Err(CliError::format(path, format!("line {line}: duplicate cell")));
        }
        u[i] = field(path, &rec, 4, line)?;
        v[i] = field(path, &rec, 5, line)?;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(CliError::format(path, format!("missing cell at {}", ts[k / cells].iso())));
    }
    NwpCube::new(spec, ts, u, v).map_err(|e| CliError::format(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFarm {
    pub farm_id: usize,
    /// Paths relative to the manifest.
    pub power: PathBuf,
    pub gfs: PathBuf,
    pub arpege: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Generator settings when the data is synthetic.
    pub seed: Option<u64>,
    pub synth: Option<SynthConfig>,
    pub gfs: NwpSourceSpec,
    pub arpege: NwpSourceSpec,
    pub farms: Vec<ManifestFarm>,
    /// Normalization anchors, filled in by `prepare`.
    #[serde(default)]
    pub anchors: Vec<FarmAnchors>,
}

impl Manifest {
    pub fn farm(&self, id: usize) -> Option<&ManifestFarm> {
        self.farms.iter().find(|f| f.farm_id == id)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::json(path, e))?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let m: Manifest = read_json(&path)?;
    if m.version != MANIFEST_VERSION {
        return Err(CliError::format(&path, format!("manifest version {} (expected {MANIFEST_VERSION})", m.version)));
    }
    Ok(m)
}

/// Power and both NWP cubes of one farm.
pub fn read_farm(dir: &Path, manifest: &Manifest, id: usize) -> Result<(PowerSeries, NwpCube, NwpCube)> {
    let f = manifest
        .farm(id)
        .ok_or_else(|| CliError::Usage(format!("farm {id} is not listed in {}", dir.join(MANIFEST_FILE).display())))?;
    Ok((
        read_power_csv(&dir.join(&f.power), id)?,
        read_nwp_csv(&dir.join(&f.gfs), manifest.gfs)?,
        read_nwp_csv(&dir.join(&f.arpege), manifest.arpege)?,
    ))
}
