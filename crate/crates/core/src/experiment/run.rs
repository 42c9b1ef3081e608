use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{
    concat_farms_global, split_train_val_test, tabular_features, tabular_step, Hour, PreparedFarm, Split, SplitSpec,
    WindowedDataset,
};
use crate::eval::{nd, per_batch_report, ForecastMode, MetricReport};
use crate::neural::{
    extract_conv_features, hybrid_features, train, ArchConfig, History, ModelKind, NetShape, NeuralModel,
    TrainingConfig,
};
use crate::trees::{
    fit_direct_multistep, fit_gbm, grid_search, DirectMultiStep, EtGrid, EtParams, GbmGrid, GbmModel, GbmParams,
    ModelSpec, Regressor,
};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Lr,
    Et,
    Gbm,
    Cnn,
    CnnRnn,
    Conv2dGbm,
}

impl ModelName {
    pub const ALL: [ModelName; 6] =
        [ModelName::Lr, ModelName::Et, ModelName::Gbm, ModelName::Cnn, ModelName::CnnRnn, ModelName::Conv2dGbm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Lr => "lr",
            ModelName::Et => "et",
            ModelName::Gbm => "gbm",
            ModelName::Cnn => "cnn",
            ModelName::CnnRnn => "cnn-rnn",
            ModelName::Conv2dGbm => "conv2d-gbm",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelName::Cnn | ModelName::CnnRnn)
    }

    /// Whether the lag switch changes this model's inputs.
    pub fn uses_lag_switch(self) -> bool {
        matches!(self, ModelName::Lr | ModelName::Et | ModelName::Gbm | ModelName::Conv2dGbm)
    }

    /// Lag columns used when the config leaves the count open.
    pub fn default_lags(self) -> usize {
        match self {
            ModelName::Et => 24,
            _ => 48,
        }
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Farm ids to run on.
    pub farms: Vec<usize>,
    pub mode: ForecastMode,
    pub model: ModelName,
    pub include_lags: bool,
    /// Lag columns for tabular models; `None` picks the per-model default.
    pub lags: Option<usize>,
    pub seed: u64,
    pub split: SplitSpec,
    /// Tune tree hyperparameters on the validation split.
    pub grid_search: bool,
    pub gbm: GbmParams,
    pub et: EtParams,
    pub gbm_grid: GbmGrid,
    pub et_grid: EtGrid,
    pub arch: ArchConfig,
    pub training: TrainingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            farms: (0..crate::data::FARMS).collect(),
            mode: ForecastMode::Individual,
            model: ModelName::Gbm,
            include_lags: false,
            lags: None,
            seed: 0,
            split: SplitSpec::default(),
            grid_search: false,
            gbm: GbmParams::default(),
            et: EtParams::default(),
            gbm_grid: GbmGrid::default(),
            et_grid: EtGrid::default(),
            arch: ArchConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.farms.is_empty() {
            return Err(Error::Config("no farms selected".into()));
        }
        let mut sorted = self.farms.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.farms.len() {
            return Err(Error::Config("farm list has duplicates".into()));
        }
        if self.mode == ForecastMode::Global && self.farms.len() < 2 {
            return Err(Error::Config("global mode needs at least two farms".into()));
        }
        if self.model == ModelName::Conv2dGbm && self.mode != ForecastMode::Individual {
            return Err(Error::Config("conv2d-gbm fits one booster per farm; use individual mode".into()));
        }
        if self.training.batch_size == 0 || self.training.patience > self.training.max_epochs {
            return Err(Error::Config("training needs batch_size >= 1 and patience <= max_epochs".into()));
        }
        Ok(())
    }

    /// Lag columns fed to tabular models (0 when lags are switched off).
    pub fn tabular_lags(&self) -> usize {
        if self.include_lags {
            self.lags.unwrap_or(self.model.default_lags())
        } else {
            0
        }
    }

    /// Label used in reports, e.g. `gbm` or `gbm+lags`.
    pub fn label(&self) -> String {
        if self.include_lags && self.model.uses_lag_switch() {
            format!("{}+lags", self.model.as_str())
        } else {
            self.model.as_str().into()
        }
    }
}

/// Test-set forecasts of one farm, one row per test window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmForecast {
    pub farm: usize,
    /// First target hour of each window.
    pub sample_times: Vec<Hour>,
    pub actual: Matrix,
    pub predicted: Matrix,
}

/// A fitted model; `farm` is `None` for a global model.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Baseline { farm: Option<usize>, model: DirectMultiStep },
    Neural { farm: Option<usize>, model: NeuralModel },
    Hybrid { farm: usize, model: GbmModel },
}

/// Validation scores of every grid candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub farm: Option<usize>,
    pub best_index: usize,
    pub table: Vec<(ModelSpec, f64)>,
}

/// Loss curves of a neural fit: the validation-checkpointed run and, when the
/// splits are merged afterwards, the refit on train plus validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub farm: Option<usize>,
    pub tuning: History,
    pub retrain: Option<History>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ExperimentConfig,
    /// One per farm, in the configured farm order.
    pub reports: Vec<MetricReport>,
    pub forecasts: Vec<FarmForecast>,
    pub models: Vec<FittedModel>,
    pub tuning: Vec<TuningRecord>,
    pub training: Vec<TrainingRecord>,
}

fn farm_seed(seed: u64, farm: Option<usize>) -> u64 {
    match farm {
        None => seed,
        Some(f) => seed.wrapping_add(1_000_003 * (f as u64 + 1)),
    }
}

fn targets(ds: &WindowedDataset) -> Result<Matrix> {
    Matrix::new(ds.len(), ds.horizon(), ds.all().y)
}

fn step_features(ds: &WindowedDataset, lags: usize) -> Result<Vec<Matrix>> {
    (0..ds.horizon()).map(|h| tabular_step(ds, h, lags).map(|(m, _)| m)).collect()
}

fn flat_nd(pred: &Matrix, actual: &Matrix) -> Result<f64> {
    nd(actual.data(), pred.data())
}

/// Per-farm splits with the leakage checks applied.
fn split_farms(cfg: &ExperimentConfig, farms: &[PreparedFarm]) -> Result<Vec<(usize, Split)>> {
    cfg.farms
        .iter()
        .map(|&id| {
            let pf = farms
                .iter()
                .find(|p| p.anchors.farm_id == id)
                .ok_or_else(|| Error::InsufficientData(format!("farm {id} was not prepared")))?;
            let split = split_train_val_test(&pf.dataset, &cfg.split)?;
            pf.anchors.check_no_leakage(&split.test)?;
            let test_start = (0..split.test.len()).map(|i| split.test.sample_time(i)).min();
            let h = split.test.horizon() as i64;
            for part in [&split.train, &split.val] {
                if let Some(start) = test_start {
                    if (0..part.len()).any(|i| part.sample_time(i).plus(h) > start) {
                        return Err(Error::Config(format!("farm {id}: training window overlaps the test period")));
                    }
                }
            }
            Ok((id, split))
        })
        .collect()
}

fn join(parts: &[WindowedDataset]) -> Result<WindowedDataset> {
    let non_empty: Vec<WindowedDataset> = parts.iter().filter(|d| !d.is_empty()).cloned().collect();
    if non_empty.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    concat_farms_global(&non_empty)
}

/// Training pool for one fit: its train, validation and merged sets.
struct Pool {
    farm: Option<usize>,
    train: WindowedDataset,
    val: WindowedDataset,
    merged: WindowedDataset,
}

fn pools(cfg: &ExperimentConfig, splits: &[(usize, Split)]) -> Result<Vec<Pool>> {
    match cfg.mode {
        ForecastMode::Individual => splits
            .iter()
            .map(|(id, s)| Ok(Pool { farm: Some(*id), train: s.train.clone(), val: s.val.clone(), merged: s.merged() }))
            .collect(),
        ForecastMode::Global => {
            let train: Vec<_> = splits.iter().map(|(_, s)| s.train.clone()).collect();
            let val: Vec<_> = splits.iter().map(|(_, s)| s.val.clone()).collect();
            let merged: Vec<_> = splits.iter().map(|(_, s)| s.merged()).collect();
            Ok(alloc::vec![Pool { farm: None, train: join(&train)?, val: join(&val)?, merged: join(&merged)? }])
        }
    }
}

fn tree_candidates(cfg: &ExperimentConfig) -> Vec<ModelSpec> {
    match cfg.model {
        ModelName::Lr => alloc::vec![ModelSpec::Linear],
        ModelName::Et if cfg.grid_search => cfg.et_grid.expand().into_iter().map(ModelSpec::ExtraTrees).collect(),
        ModelName::Et => alloc::vec![ModelSpec::ExtraTrees(cfg.et)],
        ModelName::Gbm | ModelName::Conv2dGbm if cfg.grid_search => {
            cfg.gbm_grid.expand().into_iter().map(ModelSpec::Gbm).collect()
        }
        _ => alloc::vec![ModelSpec::Gbm(cfg.gbm)],
    }
}

/// Pick a spec on the validation split (skipped for a single candidate).
fn tune(
    candidates: &[ModelSpec],
    farm: Option<usize>,
    mut val_nd: impl FnMut(&ModelSpec) -> Result<f64>,
) -> Result<(ModelSpec, Option<TuningRecord>)> {
    if candidates.len() == 1 {
        return Ok((candidates[0], None));
    }
    let r = grid_search(candidates, |c| val_nd(c))?;
    Ok((r.best, Some(TuningRecord { farm, best_index: r.best_index, table: r.table })))
}

fn forecast(test: &WindowedDataset, predicted: Matrix) -> Result<FarmForecast> {
    let farm = test.farm_ids().first().copied().ok_or_else(|| Error::InsufficientData("empty test set".into()))?;
    Ok(FarmForecast {
        farm,
        sample_times: (0..test.len()).map(|i| test.sample_time(i)).collect(),
        actual: targets(test)?,
        predicted,
    })
}

/// Fit the configured model on every farm's pre-test data and forecast its
/// test windows. `cnn` supplies the trained global CNN for `conv2d-gbm`.
pub fn run_experiment(cfg: &ExperimentConfig, farms: &[PreparedFarm], cnn: Option<&NeuralModel>) -> Result<RunOutcome> {
    cfg.validate()?;
    let splits = split_farms(cfg, farms)?;
    let mut out = RunOutcome {
        config: cfg.clone(),
        reports: Vec::new(),
        forecasts: Vec::new(),
        models: Vec::new(),
        tuning: Vec::new(),
        training: Vec::new(),
    };
    match cfg.model {
        ModelName::Lr | ModelName::Et | ModelName::Gbm => {
            let lags = cfg.tabular_lags();
            let candidates = tree_candidates(cfg);
            for pool in pools(cfg, &splits)? {
                let seed = farm_seed(cfg.seed, pool.farm);
                let (spec, rec) = tune(&candidates, pool.farm, |spec| {
                    let m = fit_direct_multistep(&step_features(&pool.train, lags)?, &targets(&pool.train)?, spec, seed)?;
                    flat_nd(&m.predict(&step_features(&pool.val, lags)?)?, &targets(&pool.val)?)
                })?;
                out.tuning.extend(rec);
                let fit_on = if cfg.split.merge_after_tuning { &pool.merged } else { &pool.train };
                let model = fit_direct_multistep(&step_features(fit_on, lags)?, &targets(fit_on)?, &spec, seed)?;
                out.models.push(FittedModel::Baseline { farm: pool.farm, model });
            }
        }
        ModelName::Cnn | ModelName::CnnRnn => {
            let kind = if cfg.model == ModelName::Cnn { ModelKind::Cnn } else { ModelKind::CnnRnn };
            for pool in pools(cfg, &splits)? {
                let seed = farm_seed(cfg.seed, pool.farm);
                let (model, record) = fit_network(kind, &cfg.arch, &cfg.training, &cfg.split, &pool, seed)?;
                out.training.push(record);
                out.models.push(FittedModel::Neural { farm: pool.farm, model });
            }
        }
        ModelName::Conv2dGbm => {
            let cnn = hybrid_cnn(cnn)?;
            let lags = cfg.tabular_lags();
            let candidates = tree_candidates(cfg);
            let hybrid_x = |ds: &WindowedDataset| -> Result<Matrix> {
                hybrid_features(&extract_conv_features(cnn, ds)?, &tabular_features(ds, lags)?.0)
            };
            for pool in pools(cfg, &splits)? {
                let farm = pool.farm.expect("individual mode");
                let (xt, yt) = (hybrid_x(&pool.train)?, targets(&pool.train)?);
                let (spec, rec) = tune(&candidates, pool.farm, |spec| {
                    let ModelSpec::Gbm(p) = spec else { unreachable!("boosting candidates only") };
                    let m = fit_gbm(&xt, yt.data(), p)?;
                    let pred = Matrix::new(pool.val.len(), pool.val.horizon(), m.predict(&hybrid_x(&pool.val)?))?;
                    flat_nd(&pred, &targets(&pool.val)?)
                })?;
                out.tuning.extend(rec);
                let ModelSpec::Gbm(params) = spec else { unreachable!("boosting candidates only") };
                let fit_on = if cfg.split.merge_after_tuning { &pool.merged } else { &pool.train };
                let model = fit_gbm(&hybrid_x(fit_on)?, targets(fit_on)?.data(), &params)?;
                out.models.push(FittedModel::Hybrid { farm, model });
            }
        }
    }

    let tests: Vec<(usize, WindowedDataset)> = splits.into_iter().map(|(id, s)| (id, s.test)).collect();
    let (forecasts, reports) = evaluate_fitted(cfg, &out.models, &tests, cnn)?;
    out.forecasts = forecasts;
    out.reports = reports;
    Ok(out)
}

fn hybrid_cnn(cnn: Option<&NeuralModel>) -> Result<&NeuralModel> {
    let cnn = cnn.ok_or_else(|| Error::Config("conv2d-gbm needs a trained global CNN".into()))?;
    if cnn.kind != ModelKind::Cnn || !cnn.is_trained() {
        return Err(Error::Config("conv2d-gbm needs a trained spatial CNN".into()));
    }
    Ok(cnn)
}

impl FittedModel {
    /// Farm the model was fitted on, `None` for a global model.
    pub fn farm(&self) -> Option<usize> {
        match self {
            FittedModel::Baseline { farm, .. } | FittedModel::Neural { farm, .. } => *farm,
            FittedModel::Hybrid { farm, .. } => Some(*farm),
        }
    }

    pub fn covers(&self, farm: usize) -> bool {
        self.farm().is_none_or(|f| f == farm)
    }

    /// Forecasts `[N, horizon]` for every window of `test`.
    pub fn predict(&self, cfg: &ExperimentConfig, test: &WindowedDataset, cnn: Option<&NeuralModel>) -> Result<Matrix> {
        let lags = cfg.tabular_lags();
        match self {
            FittedModel::Baseline { model, .. } => model.predict(&step_features(test, lags)?),
            FittedModel::Neural { model, .. } => model.predict(test),
            FittedModel::Hybrid { model, .. } => {
                let cnn = hybrid_cnn(cnn)?;
                let x = hybrid_features(&extract_conv_features(cnn, test)?, &tabular_features(test, lags)?.0)?;
                Matrix::new(test.len(), test.horizon(), model.predict(&x))
            }
        }
    }
}

/// Per-farm held-out windows, after the leakage checks.
pub fn test_sets(cfg: &ExperimentConfig, farms: &[PreparedFarm]) -> Result<Vec<(usize, WindowedDataset)>> {
    Ok(split_farms(cfg, farms)?.into_iter().map(|(id, s)| (id, s.test)).collect())
}

/// Forecast every test set with the model covering its farm and score it.
pub fn evaluate_fitted(
    cfg: &ExperimentConfig,
    models: &[FittedModel],
    tests: &[(usize, WindowedDataset)],
    cnn: Option<&NeuralModel>,
) -> Result<(Vec<FarmForecast>, Vec<MetricReport>)> {
    let label = cfg.label();
    let mut forecasts = Vec::with_capacity(tests.len());
    let mut reports = Vec::with_capacity(tests.len());
    for (farm, test) in tests {
        let model = models
            .iter()
            .find(|m| m.covers(*farm))
            .ok_or_else(|| Error::Config(format!("no fitted model covers farm {farm}")))?;
        let f = forecast(test, model.predict(cfg, test, cnn)?)?;
        reports.push(per_batch_report(&f.predicted, &f.actual, &label, *farm, cfg.mode)?);
        forecasts.push(f);
    }
    Ok((forecasts, reports))
}

/// Train with validation checkpointing, then optionally refit a fresh
/// network on train plus validation for the number of epochs that won.
fn fit_network(
    kind: ModelKind,
    arch: &ArchConfig,
    training: &TrainingConfig,
    split: &SplitSpec,
    pool: &Pool,
    seed: u64,
) -> Result<(NeuralModel, TrainingRecord)> {
    let shape = NetShape::of(&pool.train)?;
    let tcfg = TrainingConfig { seed, ..*training };
    let mut model = NeuralModel::new(kind, arch.clone(), shape, seed)?;
    let val = (!pool.val.is_empty()).then_some(&pool.val);
    let tuning = train(&mut model, &pool.train, val, &tcfg)?;
    if !split.merge_after_tuning || val.is_none() {
        return Ok((model, TrainingRecord { farm: pool.farm, tuning, retrain: None }));
    }
    let mut refit = NeuralModel::new(kind, arch.clone(), shape, seed)?;
    let epochs = tuning.best_epoch.max(1);
    let retrain = train(&mut refit, &pool.merged, None, &TrainingConfig { max_epochs: epochs, ..tcfg })?;
    Ok((refit, TrainingRecord { farm: pool.farm, tuning, retrain: Some(retrain) }))
}
