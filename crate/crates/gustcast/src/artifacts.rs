//! Run directories and the CSV files inside them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gustcast_core::eval::{ForecastMode, MetricReport};
use gustcast_core::experiment::{FarmForecast, FittedModel, RunOutcome, TrainingRecord};
use gustcast_core::neural::History;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::save_checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{read_json, write_json};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const RUN_FILE: &str = "run.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// First 12 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash(cfg: &RunConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))[..12].to_string()
}

/// `<runs_dir>/<UTC timestamp>-<config hash>`, with a numeric suffix if a
/// run with the same name already exists.
pub fn create_run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-{}", config_hash(cfg));
    std::fs::create_dir_all(&cfg.runs_dir).map_err(|e| CliError::io(&cfg.runs_dir, e))?;
    for k in 0.. {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = cfg.runs_dir.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(&dir, e)),
        }
    }
    unreachable!()
}

/// Facts about a finished run that are not part of its config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub label: String,
    pub config_hash: String,
    pub created: String,
    pub elapsed_seconds: f64,
    pub checkpoints: Vec<String>,
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| CliError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}

pub fn scope(farm: Option<usize>) -> String {
    match farm {
        Some(f) => format!("farm{f}"),
        None => "global".into(),
    }
}

pub fn write_metrics_csv(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| CliError::csv(path, e);
    w.write_record(["farm", "model", "mode", "batch_index", "nd", "nrmse"]).map_err(err)?;
    for r in reports {
        for ((b, nd), nrmse) in r.batch_index.iter().zip(&r.per_batch_nd).zip(&r.per_batch_nrmse) {
            w.write_record([r.farm.to_string(), r.model.clone(), r.mode.as_str().into(), b.to_string(), nd.to_string(), nrmse.to_string()])
                .map_err(err)?;
        }
    }
    finish(path, w)
}

/// Rebuild per-farm reports from a metrics CSV.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricReport>> {
    #[derive(Deserialize)]
    struct Row {
        farm: usize,
        model: String,
        mode: String,
        batch_index: usize,
        nd: f64,
        nrmse: f64,
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let mut groups: Vec<((usize, String, ForecastMode), Vec<Row>)> = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| CliError::csv(path, e))?;
        let mode = crate::config::parse_mode(&row.mode).map_err(|e| CliError::format(path, e))?;
        let key = (row.farm, row.model.clone(), mode);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|((farm, model, mode), rows)| {
            let idx = rows.iter().map(|r| r.batch_index).collect();
            let nd = rows.iter().map(|r| r.nd).collect();
            let nrmse = rows.iter().map(|r| r.nrmse).collect();
            MetricReport::from_batches(&model, farm, mode, idx, nd, nrmse, 0).map_err(|e| CliError::format(path, e.to_string()))
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| CliError::csv(path, e);
    w.write_record(["farm", "model", "mode", "avg_nd", "avg_nrmse", "batches", "excluded"]).map_err(err)?;
    for r in reports {
        w.write_record([
            r.farm.to_string(),
            r.model.clone(),
            r.mode.as_str().into(),
            r.avg_nd.to_string(),
            r.avg_nrmse.to_string(),
            r.per_batch_nd.len().to_string(),
            r.excluded.to_string(),
        ])
        .map_err(err)?;
    }
    finish(path, w)
}

pub fn write_predictions_csv(path: &Path, forecasts: &[FarmForecast]) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| CliError::csv(path, e);
    w.write_record(["farm", "batch_index", "step", "timestamp", "actual", "predicted"]).map_err(err)?;
    for f in forecasts {
        for (b, t0) in f.sample_times.iter().enumerate() {
            for s in 0..f.actual.cols() {
                w.write_record([
                    f.farm.to_string(),
                    b.to_string(),
                    s.to_string(),
                    t0.plus(s as i64).iso(),
                    f.actual.get(b, s).to_string(),
                    f.predicted.get(b, s).to_string(),
                ])
                .map_err(err)?;
            }
        }
    }
    finish(path, w)
}

/// One row of a predictions CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PredictionRow {
    pub farm: usize,
    pub batch_index: usize,
    pub step: usize,
    pub timestamp: String,
    pub actual: f64,
    pub predicted: f64,
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| CliError::csv(path, e))).collect()
}

pub fn write_history_csv(path: &Path, history: &History) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| CliError::csv(path, e);
    w.write_record(["epoch", "train_mse", "val_mse"]).map_err(err)?;
    for e in &history.epochs {
        w.write_record([e.epoch.to_string(), e.train_mse.to_string(), e.val_mse.map(|v| v.to_string()).unwrap_or_default()])
            .map_err(err)?;
    }
    finish(path, w)
}

fn write_training(dir: &Path, rec: &TrainingRecord) -> Result<()> {
    let s = scope(rec.farm);
    write_history_csv(&dir.join(format!("history-{s}.csv")), &rec.tuning)?;
    if let Some(r) = &rec.retrain {
        write_history_csv(&dir.join(format!("history-{s}-retrain.csv")), r)?;
    }
    Ok(())
}

pub fn checkpoint_name(model: &FittedModel) -> String {
    let farm = match model {
        FittedModel::Baseline { farm, .. } | FittedModel::Neural { farm, .. } => *farm,
        FittedModel::Hybrid { farm, .. } => Some(*farm),
    };
    format!("model-{}.json", scope(farm))
}

/// Write every artifact of a finished run into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, outcome: &RunOutcome, elapsed_seconds: f64) -> Result<()> {
    write_json(&dir.join(CONFIG_FILE), cfg)?;
    write_metrics_csv(&dir.join(METRICS_FILE), &outcome.reports)?;
    write_summary_csv(&dir.join(SUMMARY_FILE), &outcome.reports)?;
    write_predictions_csv(&dir.join(PREDICTIONS_FILE), &outcome.forecasts)?;
    for rec in &outcome.training {
        write_training(dir, rec)?;
    }
    if !outcome.tuning.is_empty() {
        write_json(&dir.join("tuning.json"), &outcome.tuning)?;
        let path = dir.join("tuning.csv");
        let mut w = writer(&path)?;
        let err = |e| CliError::csv(&path, e);
        w.write_record(["scope", "candidate", "params", "val_nd", "best"]).map_err(err)?;
        for t in &outcome.tuning {
            for (i, (spec, score)) in t.table.iter().enumerate() {
                let params = serde_json::to_string(spec).expect("spec serializes");
                w.write_record([scope(t.farm), i.to_string(), params, score.to_string(), (i == t.best_index).to_string()])
                    .map_err(err)?;
            }
        }
        finish(&path, w)?;
    }
    let ckpt = dir.join(CHECKPOINT_DIR);
    std::fs::create_dir_all(&ckpt).map_err(|e| CliError::io(&ckpt, e))?;
    let mut names = Vec::new();
    for m in &outcome.models {
        let name = checkpoint_name(m);
        save_checkpoint(&ckpt.join(&name), m)?;
        names.push(name);
    }
    let info = RunInfo {
        label: outcome.config.label(),
        config_hash: config_hash(cfg),
        created: chrono::Utc::now().to_rfc3339(),
        elapsed_seconds,
        checkpoints: names,
    };
    write_json(&dir.join(RUN_FILE), &info)
}

pub fn read_run_config(dir: &Path) -> Result<RunConfig> {
    read_json(&dir.join(CONFIG_FILE))
}

pub fn read_run_info(dir: &Path) -> Result<RunInfo> {
    read_json(&dir.join(RUN_FILE))
}
