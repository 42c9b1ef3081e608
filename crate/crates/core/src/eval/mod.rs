//! Forecast error metrics, per-batch reports, the paired t-test and
//! classification scores.

mod metrics;
mod ttest;

pub use metrics::{nd, nrmse, per_batch_report, precision_recall_f1, ForecastMode, MetricReport, Prf};
pub use ttest::{
    paired_t_test, regularized_incomplete_beta, significant, student_t_cdf, PairedTTestResult, SIGNIFICANCE_LEVEL,
};
