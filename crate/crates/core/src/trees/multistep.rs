use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{fit_extra_trees, fit_gbm, fit_linear, EtModel, EtParams, GbmModel, GbmParams, LinearModel, Regressor};
use crate::{Error, Matrix, Result};

/// Base learner and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Linear,
    Gbm(GbmParams),
    #[serde(rename = "et")]
    ExtraTrees(EtParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearModel),
    Gbm(GbmModel),
    #[serde(rename = "et")]
    ExtraTrees(EtModel),
}

impl Regressor for Model {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict_row(x),
            Model::Gbm(m) => m.predict_row(x),
            Model::ExtraTrees(m) => m.predict_row(x),
        }
    }
}

pub fn fit_model(spec: &ModelSpec, x: &Matrix, y: &[f64], seed: u64) -> Result<Model> {
    Ok(match spec {
        ModelSpec::Linear => Model::Linear(fit_linear(x, y)?),
        ModelSpec::Gbm(p) => Model::Gbm(fit_gbm(x, y, p)?),
        ModelSpec::ExtraTrees(p) => Model::ExtraTrees(fit_extra_trees(x, y, p, seed)?),
    })
}

/// One independent model per horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectMultiStep {
    pub horizon: usize,
    pub models: Vec<Model>,
}

impl DirectMultiStep {
    /// `step_features[h]` holds the step-`h` rows; returns `[N, horizon]`.
    pub fn predict(&self, step_features: &[Matrix]) -> Result<Matrix> {
        if step_features.len() != self.horizon {
            return Err(Error::shape("predict", format!("{} step matrices for horizon {}", step_features.len(), self.horizon)));
        }
        let n = step_features[0].rows();
        let mut out = Matrix::zeros(n, self.horizon);
        for (h, (m, x)) in self.models.iter().zip(step_features).enumerate() {
            if x.rows() != n {
                return Err(Error::shape("predict", "step matrices differ in row count"));
            }
            for i in 0..n {
                out.row_mut(i)[h] = m.predict_row(x.row(i));
            }
        }
        Ok(out)
    }
}

/// Fit step `h` on `(step_features[h], targets[:, h])` with seed `seed + h`.
pub fn fit_direct_multistep(
    step_features: &[Matrix],
    targets: &Matrix,
    spec: &ModelSpec,
    seed: u64,
) -> Result<DirectMultiStep> {
    let horizon = targets.cols();
    if step_features.len() != horizon || horizon == 0 {
        return Err(Error::InsufficientData(format!("{} step matrices for {horizon} target steps", step_features.len())));
    }
    if step_features.iter().any(|x| x.rows() != targets.rows()) {
        return Err(Error::shape("fit_direct_multistep", "feature and target rows differ"));
    }
    let fit_step = |h: usize| fit_model(spec, &step_features[h], &targets.column(h), seed.wrapping_add(h as u64));
    #[cfg(feature = "parallel")]
    let models = {
        use rayon::prelude::*;
        (0..horizon).into_par_iter().map(fit_step).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let models = (0..horizon).map(fit_step).collect::<Result<Vec<_>>>()?;
    Ok(DirectMultiStep { horizon, models })
}
