//! Run configuration: a JSON file whose keys may be overridden by flags.

use std::path::{Path, PathBuf};

use gustcast_core::data::{PrepConfig, SynthConfig};
use gustcast_core::eval::ForecastMode;
use gustcast_core::experiment::{ExperimentConfig, ModelName};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::read_json;

/// Which runs `compare` launches when it is not handed existing runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub models: Vec<ModelName>,
    pub modes: Vec<ForecastMode>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            models: vec![ModelName::Lr, ModelName::Et, ModelName::Gbm, ModelName::Cnn, ModelName::CnnRnn],
            modes: vec![ForecastMode::Individual, ForecastMode::Global],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding `manifest.json` and the raw CSVs.
    pub data_dir: PathBuf,
    /// Parent of all run directories.
    pub runs_dir: PathBuf,
    /// Seed of the synthetic generator.
    pub data_seed: u64,
    pub synth: SynthConfig,
    pub prep: PrepConfig,
    pub experiment: ExperimentConfig,
    pub grid: GridConfig,
    /// Trained global CNN run used by `conv2d-gbm`.
    pub cnn_run: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            runs_dir: PathBuf::from("runs"),
            data_seed: 0,
            synth: SynthConfig::default(),
            prep: PrepConfig::default(),
            experiment: ExperimentConfig::default(),
            grid: GridConfig::default(),
            cnn_run: None,
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub farms: Option<Vec<usize>>,
    pub mode: Option<ForecastMode>,
    pub model: Option<ModelName>,
    pub include_lags: Option<bool>,
    pub data_dir: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub cnn_run: Option<PathBuf>,
    pub days: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => read_json(p),
            None => Ok(RunConfig::default()),
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.experiment.seed = s;
            self.data_seed = s;
        }
        if let Some(f) = &o.farms {
            self.experiment.farms = f.clone();
        }
        if let Some(m) = o.mode {
            self.experiment.mode = m;
        }
        if let Some(m) = o.model {
            self.experiment.model = m;
        }
        if let Some(l) = o.include_lags {
            self.experiment.include_lags = l;
        }
        if let Some(d) = &o.data_dir {
            self.data_dir = d.clone();
        }
        if let Some(d) = &o.runs_dir {
            self.runs_dir = d.clone();
        }
        if let Some(c) = &o.cnn_run {
            self.cnn_run = Some(c.clone());
        }
        if let Some(d) = o.days {
            self.synth.days = d;
        }
    }

    /// Checks that span several sections.
    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.experiment.split.test_days != self.prep.test_days {
            return Err(CliError::Usage(format!(
                "split.test_days ({}) must equal prep.test_days ({})",
                self.experiment.split.test_days, self.prep.test_days
            )));
        }
        if let Some(&f) = self.experiment.farms.iter().find(|&&f| f >= self.prep.n_farms) {
            return Err(CliError::Usage(format!("farm {f} outside 0..{}", self.prep.n_farms)));
        }
        if self.experiment.model == ModelName::Conv2dGbm && self.cnn_run.is_none() {
            return Err(CliError::Usage("conv2d-gbm needs `cnn_run`, a trained global CNN run directory".into()));
        }
        Ok(())
    }
}

pub fn parse_farms(s: &str) -> std::result::Result<Vec<usize>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| format!("bad range start `{a}`"))?;
        let b: usize = b.trim().parse().map_err(|_| format!("bad range end `{b}`"))?;
        return Ok((a..b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| format!("bad farm id `{p}`"))).collect()
}

pub fn parse_mode(s: &str) -> std::result::Result<ForecastMode, String> {
    match s {
        "individual" => Ok(ForecastMode::Individual),
        "global" => Ok(ForecastMode::Global),
        _ => Err(format!("unknown mode `{s}` (individual or global)")),
    }
}

pub fn parse_model(s: &str) -> std::result::Result<ModelName, String> {
    s.parse().map_err(|e: gustcast_core::Error| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: RunConfig = serde_json::from_str(r#"{"experiment": {"model": "cnn-rnn"}}"#).unwrap();
        assert_eq!(partial.experiment.model, ModelName::CnnRnn);
        assert_eq!(partial.prep, PrepConfig::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": 1}"#).is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut c: RunConfig = serde_json::from_str(r#"{"experiment": {"seed": 3, "mode": "individual"}}"#).unwrap();
        c.apply(&Overrides { seed: Some(9), mode: Some(ForecastMode::Global), farms: Some(vec![1, 2]), ..Default::default() });
        assert_eq!(c.experiment.seed, 9);
        assert_eq!(c.experiment.mode, ForecastMode::Global);
        assert_eq!(c.experiment.farms, vec![1, 2]);
    }

    #[test]
    fn invalid_combinations() {
        let mut c = RunConfig::default();
        c.experiment.mode = ForecastMode::Global;
        c.experiment.farms = vec![0];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.experiment.model = ModelName::Conv2dGbm;
        assert!(matches!(c.validate(), Err(CliError::Usage(_))));
        let mut c = RunConfig::default();
        c.prep.test_days = 30;
        assert!(c.validate().is_err());
        assert_eq!(parse_farms("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_farms("4, 1").unwrap(), vec![4, 1]);
        assert!(parse_farms("x").is_err());
    }
}
