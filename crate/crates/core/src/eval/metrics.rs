use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

fn check(y: &[f64], yhat: &[f64], op: &'static str) -> Result<f64> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::shape(op, format!("{} targets, {} predictions", y.len(), yhat.len())));
    }
    let abs: f64 = y.iter().map(|v| libm::fabs(*v)).sum();
    if abs <= 0.0 {
        return Err(Error::Undefined(format!("{op}: all targets are zero")));
    }
    Ok(abs)
}

/// Normalized deviation `sum|yhat - y| / sum|y|`.
pub fn nd(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let denom = check(y, yhat, "nd")?;
    Ok(y.iter().zip(yhat).map(|(a, b)| libm::fabs(b - a)).sum::<f64>() / denom)
}

/// Normalized RMSE `sqrt(mean((yhat - y)^2)) / mean|y|`.
pub fn nrmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let n = y.len() as f64;
    let denom = check(y, yhat, "nrmse")? / n;
    let mse = y.iter().zip(yhat).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / n;
    Ok(libm::sqrt(mse) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    Individual,
    Global,
}

impl ForecastMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ForecastMode::Individual => "individual",
            ForecastMode::Global => "global",
        }
    }
}

/// Metrics of one model on one farm's test batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub farm: usize,
    pub mode: ForecastMode,
    /// Index of each scored batch in the test set.
    pub batch_index: Vec<usize>,
    pub per_batch_nd: Vec<f64>,
    pub per_batch_nrmse: Vec<f64>,
    /// Batches skipped because every target was zero.
    pub excluded: usize,
    pub avg_nd: f64,
    pub avg_nrmse: f64,
}

impl MetricReport {
    /// Rebuild a report (and its averages) from per-batch values.
    pub fn from_batches(
        model: &str,
        farm: usize,
        mode: ForecastMode,
        batch_index: Vec<usize>,
        per_batch_nd: Vec<f64>,
        per_batch_nrmse: Vec<f64>,
        excluded: usize,
    ) -> Result<Self> {
        if per_batch_nd.len() != per_batch_nrmse.len() || per_batch_nd.len() != batch_index.len() {
            return Err(Error::shape("metric report", "per-batch arrays differ in length"));
        }
        if per_batch_nd.is_empty() {
            return Err(Error::Undefined(format!("{model} farm {farm}: no scorable batches")));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Ok(MetricReport {
            model: model.into(),
            farm,
            mode,
            avg_nd: mean(&per_batch_nd),
            avg_nrmse: mean(&per_batch_nrmse),
            batch_index,
            per_batch_nd,
            per_batch_nrmse,
            excluded,
        })
    }
}

/// ND and NRMSE of every row (one 24-step batch each), then their means.
/// Rows whose targets are all zero are left out and counted.
pub fn per_batch_report(
    predictions: &Matrix,
    targets: &Matrix,
    model: &str,
    farm: usize,
    mode: ForecastMode,
) -> Result<MetricReport> {
    if (predictions.rows(), predictions.cols()) != (targets.rows(), targets.cols()) {
        return Err(Error::shape(
            "per_batch_report",
            format!("{}x{} predictions vs {}x{} targets", predictions.rows(), predictions.cols(), targets.rows(), targets.cols()),
        ));
    }
    let (mut idx, mut nds, mut nrmses, mut excluded) = (Vec::new(), Vec::new(), Vec::new(), 0);
    for b in 0..targets.rows() {
        let (y, p) = (targets.row(b), predictions.row(b));
        match (nd(y, p), nrmse(y, p)) {
            (Ok(a), Ok(c)) => {
                idx.push(b);
                nds.push(a);
                nrmses.push(c);
            }
            (Err(Error::Undefined(_)), _) => excluded += 1,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    MetricReport::from_batches(model, farm, mode, idx, nds, nrmses, excluded)
}

/// Precision, recall and F1; a zero denominator gives 0 and sets the flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

pub fn precision_recall_f1(labels: &[bool], predictions: &[bool], weights: Option<&[f64]>) -> Result<Prf> {
    if labels.len() != predictions.len() || weights.is_some_and(|w| w.len() != labels.len()) {
        return Err(Error::shape("precision_recall_f1", "labels, predictions and weights differ in length"));
    }
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for i in 0..labels.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        match (labels[i], predictions[i]) {
            (true, true) => tp += w,
            (false, true) => fp += w,
            (true, false) => fneg += w,
            (false, false) => {}
        }
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { (num / den, false) } else { (0.0, true) };
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (recall, recall_undefined) = ratio(tp, tp + fneg);
    let (f1, f1_undefined) = ratio(2.0 * precision * recall, precision + recall);
    Ok(Prf { precision, recall, f1, precision_undefined, recall_undefined, f1_undefined })
}
