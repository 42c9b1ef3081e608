//! The work behind each subcommand.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gustcast_core::data::{generate_synthetic_farm, prepare_farm, ramp_labels, PreparedFarm};
use gustcast_core::eval::{precision_recall_f1, ForecastMode, MetricReport, Prf};
use gustcast_core::experiment::{
    compare as compare_reports, evaluate_fitted, run_experiment, test_sets, Comparison, FittedModel, ModelName, RunOutcome,
};
use gustcast_core::neural::NeuralModel;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{
    checkpoint_name, create_run_dir, read_metrics_csv, read_predictions_csv, read_run_config, read_run_info, write_metrics_csv,
    write_run, CHECKPOINT_DIR, METRICS_FILE, PREDICTIONS_FILE,
};
use crate::checkpoint::load_checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{
    read_farm, read_manifest, write_json, write_nwp_csv, write_power_csv, Manifest, ManifestFarm, MANIFEST_FILE, MANIFEST_VERSION,
};
use crate::table::{render_markdown, write_comparison_csv, write_pvalues_csv};

/// Written by `compare` next to the table; one run directory per line.
pub const RUNS_LIST: &str = "runs.txt";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Synthetic power and NWP files for every farm, plus the manifest.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    create_dir(out)?;
    let farms: Vec<ManifestFarm> = (0..cfg.prep.n_farms)
        .into_par_iter()
        .map(|id| -> Result<ManifestFarm> {
            let farm = generate_synthetic_farm(cfg.data_seed, id, &cfg.synth)?;
            let rel = PathBuf::from(format!("farm{id}"));
            create_dir(&out.join(&rel))?;
            let entry = ManifestFarm {
                farm_id: id,
                power: rel.join("power.csv"),
                gfs: rel.join("gfs.csv"),
                arpege: rel.join("arpege.csv"),
            };
            write_power_csv(&out.join(&entry.power), &farm.power)?;
            write_nwp_csv(&out.join(&entry.gfs), &farm.gfs)?;
            write_nwp_csv(&out.join(&entry.arpege), &farm.arpege)?;
            Ok(entry)
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: Some(cfg.data_seed),
        synth: Some(cfg.synth),
        gfs: cfg.synth.gfs,
        arpege: cfg.synth.arpege,
        farms,
        anchors: Vec::new(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Read and window the given farms of `cfg.data_dir`.
pub fn load_prepared(cfg: &RunConfig, farms: &[usize]) -> Result<Vec<PreparedFarm>> {
    let manifest = read_manifest(&cfg.data_dir)?;
    farms
        .par_iter()
        .map(|&id| {
            let (power, gfs, arpege) = read_farm(&cfg.data_dir, &manifest, id)?;
            Ok(prepare_farm(&power, &gfs, &arpege, &cfg.prep)?)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PrepareSummary {
    pub farm: usize,
    pub windows: usize,
    pub fit_until: String,
}

/// Prepare every farm of the manifest and store the fitted anchors in it.
pub fn prepare(cfg: &RunConfig) -> Result<Vec<PrepareSummary>> {
    let mut manifest = read_manifest(&cfg.data_dir)?;
    let ids: Vec<usize> = manifest.farms.iter().map(|f| f.farm_id).collect();
    let prepared = load_prepared(cfg, &ids)?;
    let summary = prepared
        .iter()
        .map(|p| PrepareSummary { farm: p.anchors.farm_id, windows: p.dataset.len(), fit_until: p.anchors.fit_until.iso() })
        .collect();
    manifest.anchors = prepared.into_iter().map(|p| p.anchors).collect();
    write_json(&cfg.data_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(summary)
}

/// The global CNN stored in a finished run directory.
pub fn load_cnn(run_dir: &Path) -> Result<NeuralModel> {
    let cfg = read_run_config(run_dir)?;
    if cfg.experiment.model != ModelName::Cnn || cfg.experiment.mode != ForecastMode::Global {
        return Err(CliError::Usage(format!(
            "{} holds a {} {} run, conv2d-gbm needs a global cnn run",
            run_dir.display(),
            cfg.experiment.mode.as_str(),
            cfg.experiment.model.as_str()
        )));
    }
    let path = run_dir.join(CHECKPOINT_DIR).join("model-global.json");
    match load_checkpoint(&path)? {
        FittedModel::Neural { model, .. } => Ok(model),
        _ => Err(CliError::format(&path, "not a neural checkpoint")),
    }
}

fn hybrid_cnn(cfg: &RunConfig) -> Result<Option<NeuralModel>> {
    if cfg.experiment.model != ModelName::Conv2dGbm {
        return Ok(None);
    }
    let dir = cfg.cnn_run.as_deref().ok_or_else(|| CliError::Usage("conv2d-gbm needs `cnn_run`".into()))?;
    let cnn_cfg = read_run_config(dir)?;
    if cnn_cfg.prep != cfg.prep || cnn_cfg.data_dir != cfg.data_dir {
        return Err(CliError::Usage(format!("{} was trained on different data or preparation", dir.display())));
    }
    load_cnn(dir).map(Some)
}

/// Fit, forecast and persist one run on already prepared farms.
pub fn train_prepared(cfg: &RunConfig, farms: &[PreparedFarm]) -> Result<(PathBuf, RunOutcome)> {
    cfg.validate()?;
    let cnn = hybrid_cnn(cfg)?;
    let start = Instant::now();
    let outcome = run_experiment(&cfg.experiment, farms, cnn.as_ref())?;
    let dir = create_run_dir(cfg)?;
    write_run(&dir, cfg, &outcome, start.elapsed().as_secs_f64())?;
    Ok((dir, outcome))
}

pub fn train(cfg: &RunConfig) -> Result<(PathBuf, RunOutcome)> {
    cfg.validate()?;
    let farms = load_prepared(cfg, &cfg.experiment.farms)?;
    train_prepared(cfg, &farms)
}

/// `train` with grid search over the configured hyperparameter grid.
pub fn gridsearch(cfg: &RunConfig) -> Result<(PathBuf, RunOutcome)> {
    if !matches!(cfg.experiment.model, ModelName::Gbm | ModelName::Et | ModelName::Conv2dGbm) {
        return Err(CliError::Usage(format!("no search grid for {}", cfg.experiment.model.as_str())));
    }
    let mut cfg = cfg.clone();
    cfg.experiment.grid_search = true;
    train(&cfg)
}

#[derive(Debug, Clone, Copy)]
pub struct RampOptions {
    pub threshold: f64,
    pub window: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RampScore {
    pub farm: usize,
    pub events: usize,
    pub predicted_events: usize,
    pub prf: Prf,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub run: PathBuf,
    /// Recomputed metrics are bit-identical to the stored ones.
    pub matches_stored: bool,
    pub reports: Vec<MetricReport>,
    pub ramps: Vec<RampScore>,
}

/// Reload a run's checkpoints, forecast its test windows again and compare
/// with the stored metrics. Optionally score ramp detection.
pub fn evaluate(run_dir: &Path, ramp: Option<RampOptions>) -> Result<EvalSummary> {
    let cfg = read_run_config(run_dir)?;
    let info = read_run_info(run_dir)?;
    let models = info
        .checkpoints
        .iter()
        .map(|name| load_checkpoint(&run_dir.join(CHECKPOINT_DIR).join(name)))
        .collect::<Result<Vec<_>>>()?;
    for m in &models {
        if !info.checkpoints.contains(&checkpoint_name(m)) {
            return Err(CliError::format(run_dir, "checkpoint name does not match its scope"));
        }
    }
    let cnn = hybrid_cnn(&cfg)?;
    let farms = load_prepared(&cfg, &cfg.experiment.farms)?;
    let tests = test_sets(&cfg.experiment, &farms)?;
    let (forecasts, reports) = evaluate_fitted(&cfg.experiment, &models, &tests, cnn.as_ref())?;
    write_metrics_csv(&run_dir.join("metrics-eval.csv"), &reports)?;
    let stored = read_metrics_csv(&run_dir.join(METRICS_FILE))?;
    let mut ramps = Vec::new();
    if let Some(r) = ramp {
        for f in &forecasts {
            let actual = ramp_labels(f.actual.data(), r.threshold, r.window)?;
            let predicted = ramp_labels(f.predicted.data(), r.threshold, r.window)?;
            ramps.push(RampScore {
                farm: f.farm,
                events: actual.iter().filter(|&&l| l).count(),
                predicted_events: predicted.iter().filter(|&&l| l).count(),
                prf: precision_recall_f1(&actual, &predicted, None)?,
            });
        }
        write_ramps_csv(&run_dir.join("ramps.csv"), &ramps)?;
    }
    Ok(EvalSummary { run: run_dir.to_path_buf(), matches_stored: stored == reports, reports, ramps })
}

fn write_ramps_csv(path: &Path, ramps: &[RampScore]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let err = |e| CliError::csv(path, e);
    w.write_record(["farm", "events", "predicted_events", "precision", "recall", "f1"]).map_err(err)?;
    for r in ramps {
        w.write_record([
            r.farm.to_string(),
            r.events.to_string(),
            r.predicted_events.to_string(),
            r.prf.precision.to_string(),
            r.prf.recall.to_string(),
            r.prf.f1.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Run every model and mode of `cfg.grid` on shared prepared data. The
/// hybrid runs after the global CNN it depends on.
pub fn run_grid(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let grid = &cfg.grid;
    let mut ids = cfg.experiment.farms.clone();
    ids.sort_unstable();
    let farms = load_prepared(cfg, &ids)?;
    let variant = |model: ModelName, mode: ForecastMode| {
        let mut c = cfg.clone();
        c.experiment.model = model;
        c.experiment.mode = mode;
        c
    };
    let plain: Vec<RunConfig> = grid
        .models
        .iter()
        .filter(|&&m| m != ModelName::Conv2dGbm)
        .flat_map(|&m| grid.modes.iter().map(move |&mode| (m, mode)))
        .map(|(m, mode)| variant(m, mode))
        .collect();
    let mut dirs: Vec<(RunConfig, PathBuf)> = plain
        .into_par_iter()
        .map(|c| train_prepared(&c, &farms).map(|(d, _)| (c, d)))
        .collect::<Result<_>>()?;
    if grid.models.contains(&ModelName::Conv2dGbm) {
        let cnn = match dirs.iter().find(|(c, _)| c.experiment.model == ModelName::Cnn && c.experiment.mode == ForecastMode::Global) {
            Some((_, d)) => d.clone(),
            None => {
                let c = variant(ModelName::Cnn, ForecastMode::Global);
                train_prepared(&c, &farms)?.0
            }
        };
        let mut c = variant(ModelName::Conv2dGbm, ForecastMode::Individual);
        c.cnn_run = Some(cnn);
        let d = train_prepared(&c, &farms)?.0;
        dirs.push((c, d));
    }
    Ok(dirs.into_iter().map(|(_, d)| d).collect())
}

/// Expand compare output directories into the runs they list.
pub fn expand_runs(dirs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for d in dirs {
        let list = d.join(RUNS_LIST);
        if list.is_file() {
            let text = std::fs::read_to_string(&list).map_err(|e| CliError::io(&list, e))?;
            out.extend(text.lines().filter(|l| !l.trim().is_empty()).map(PathBuf::from));
        } else {
            out.push(d.clone());
        }
    }
    Ok(out)
}

/// Stored reports of every run, with repeated model labels made distinct.
fn gather_reports(runs: &[PathBuf]) -> Result<Vec<(String, Vec<MetricReport>)>> {
    let mut seen: HashMap<(String, ForecastMode), usize> = HashMap::new();
    let mut out = Vec::with_capacity(runs.len());
    for dir in runs {
        let mut reports = read_metrics_csv(&dir.join(METRICS_FILE))?;
        let Some(first) = reports.first() else {
            return Err(CliError::format(dir, "run has no metrics"));
        };
        let count = seen.entry((first.model.clone(), first.mode)).or_insert(0);
        *count += 1;
        if *count > 1 {
            let label = format!("{}#{}", first.model, count);
            for r in &mut reports {
                r.model = label.clone();
            }
        }
        out.push((reports[0].model.clone(), reports));
    }
    Ok(out)
}

/// Tabulate finished runs, or run `cfg.grid` first when none are given.
/// Writes `comparison.csv`, `pvalues.csv`, `table.md` and `runs.txt` to `out`.
pub fn compare(cfg: &RunConfig, runs: &[PathBuf], out: Option<&Path>) -> Result<(PathBuf, Comparison)> {
    let runs = if runs.is_empty() { run_grid(cfg)? } else { expand_runs(runs)? };
    let reports: Vec<MetricReport> = gather_reports(&runs)?.into_iter().flat_map(|(_, r)| r).collect();
    let table = compare_reports(&reports)?;
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => cfg.runs_dir.join(format!("compare-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"))),
    };
    create_dir(&out)?;
    write_comparison_csv(&out.join("comparison.csv"), &table)?;
    write_pvalues_csv(&out.join("pvalues.csv"), &table)?;
    let md = out.join("table.md");
    std::fs::write(&md, render_markdown(&table)).map_err(|e| CliError::io(&md, e))?;
    let list: String = runs.iter().map(|r| format!("{}\n", r.display())).collect();
    let list_path = out.join(RUNS_LIST);
    std::fs::write(&list_path, list).map_err(|e| CliError::io(&list_path, e))?;
    Ok((out, table))
}

#[derive(Debug, Clone, Serialize)]
pub struct PlotSummary {
    pub columns: Vec<String>,
    pub batches: usize,
    pub files: Vec<PathBuf>,
}

/// Per-batch error series averaged over farms, one column pair per run,
/// and per-farm actual against predicted series.
pub fn plotdata(runs: &[PathBuf], out: &Path) -> Result<PlotSummary> {
    let runs = expand_runs(runs)?;
    if runs.is_empty() {
        return Err(CliError::Usage("plotdata needs at least one run".into()));
    }
    let gathered = gather_reports(&runs)?;
    let columns: Vec<String> =
        gathered.iter().map(|(label, reports)| format!("{label}/{}", reports[0].mode.as_str())).collect();
    create_dir(out)?;
    let mut files = Vec::new();

    // batch -> per run (sum nd, sum nrmse, count)
    let mut table: BTreeMap<usize, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for (k, (_, reports)) in gathered.iter().enumerate() {
        for r in reports {
            for (i, &b) in r.batch_index.iter().enumerate() {
                let row = table.entry(b).or_insert_with(|| vec![(0.0, 0.0, 0); gathered.len()]);
                row[k].0 += r.per_batch_nd[i];
                row[k].1 += r.per_batch_nrmse[i];
                row[k].2 += 1;
            }
        }
    }
    let path = out.join("per_batch.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
    let err = |e| CliError::csv(&path, e);
    let mut header = vec!["batch_index".to_string()];
    for c in &columns {
        header.push(format!("{c}:nd"));
        header.push(format!("{c}:nrmse"));
    }
    w.write_record(&header).map_err(err)?;
    for (b, row) in &table {
        let mut rec = vec![b.to_string()];
        for &(nd, nrmse, n) in row {
            if n == 0 {
                rec.extend([String::new(), String::new()]);
            } else {
                rec.push((nd / n as f64).to_string());
                rec.push((nrmse / n as f64).to_string());
            }
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    files.push(path);

    // farm -> (batch, step) -> (timestamp, actual, per-run predictions)
    type Series = BTreeMap<(usize, usize), (String, f64, Vec<Option<f64>>)>;
    let mut farms: BTreeMap<usize, Series> = BTreeMap::new();
    for (k, dir) in runs.iter().enumerate() {
        let pred_path = dir.join(PREDICTIONS_FILE);
        for row in read_predictions_csv(&pred_path)? {
            let entry = farms
                .entry(row.farm)
                .or_default()
                .entry((row.batch_index, row.step))
                .or_insert_with(|| (row.timestamp.clone(), row.actual, vec![None; runs.len()]));
            if entry.0 != row.timestamp || entry.1.to_bits() != row.actual.to_bits() {
                return Err(CliError::format(&pred_path, format!("farm {} disagrees with other runs on its test targets", row.farm)));
            }
            entry.2[k] = Some(row.predicted);
        }
    }
    for (farm, series) in &farms {
        let path = out.join(format!("predictions-farm{farm}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        let err = |e| CliError::csv(&path, e);
        let mut header = vec!["timestamp".to_string(), "actual".to_string()];
        header.extend(columns.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (ts, actual, preds) in series.values() {
            let mut rec = vec![ts.clone(), actual.to_string()];
            rec.extend(preds.iter().map(|p| p.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        files.push(path);
    }
    Ok(PlotSummary { columns, batches: table.len(), files })
}
