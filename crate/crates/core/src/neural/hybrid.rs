use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::EVAL_CHUNK;
use super::NeuralModel;
use crate::autodiff::{Graph, Mode};
use crate::data::WindowedDataset;
use crate::trees::{fit_gbm, GbmModel, GbmParams};
use crate::{Error, Matrix, Result};

/// Flattened conv features of a trained network, one row per (sample, step)
/// in sample-major order, GFS columns first.
pub fn extract_conv_features(model: &NeuralModel, dataset: &WindowedDataset) -> Result<Matrix> {
    if !model.is_trained() {
        return Err(Error::Config("conv features need a trained network".into()));
    }
    let width = model.conv_feature_width();
    let mut out = Vec::with_capacity(dataset.len() * model.shape.horizon * width);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let idx: Vec<usize> = (0..dataset.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let b = dataset.batch(chunk);
        let mut g = Graph::new();
        let x = model.inputs(&mut g, &b)?;
        let f = model.conv_features(&mut g, &x, Mode::Infer, &mut rng)?;
        out.extend_from_slice(g.value(f).data());
    }
    Matrix::new(dataset.len() * model.shape.horizon, width, out)
}

/// Original tabular columns followed by the conv columns.
pub fn hybrid_features(conv: &Matrix, original: &Matrix) -> Result<Matrix> {
    if conv.rows() != original.rows() {
        return Err(Error::shape("hybrid features", alloc::format!("{} conv rows vs {} tabular rows", conv.rows(), original.rows())));
    }
    original.hstack(conv)
}

/// Gradient boosting on the tabular columns augmented with conv features.
pub fn hybrid_fit(conv: &Matrix, original: &Matrix, y: &[f64], params: &GbmParams) -> Result<GbmModel> {
    let x = hybrid_features(conv, original)?;
    fit_gbm(&x, y, params)
}
