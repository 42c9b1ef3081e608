//! A single forecasting run over prepared farms, and the comparison grid
//! assembled from several runs.

mod compare;
mod run;

pub use compare::{compare, Comparison, ComparisonCell, ComparisonRow, Metric, PairwiseTest};
pub use run::{
    evaluate_fitted, run_experiment, test_sets, ExperimentConfig, FarmForecast, FittedModel, ModelName, RunOutcome,
    TrainingRecord, TuningRecord,
};
