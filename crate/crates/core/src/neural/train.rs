use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::EVAL_CHUNK;
use super::NeuralModel;
use crate::autodiff::{Adam, AdamConfig, Graph, Mode, Tensor};
use crate::data::WindowedDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { batch_size: 64, max_epochs: 300, patience: 20, seed: 0, adam: AdamConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean of the minibatch losses seen during the epoch.
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_mse: Option<f64>,
}

impl History {
    pub fn initial_train_mse(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.train_mse)
    }

    pub fn final_train_mse(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_mse)
    }
}

/// Infer-mode mean squared error over a whole dataset.
pub fn evaluate_mse(model: &NeuralModel, dataset: &WindowedDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData("no samples to evaluate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut sse = 0.0;
    let mut count = 0usize;
    let idx: Vec<usize> = (0..dataset.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let b = dataset.batch(chunk);
        let mut g = Graph::new();
        let x = model.inputs(&mut g, &b)?;
        let y = model.forward(&mut g, &x, Mode::Infer, &mut rng)?;
        for (p, t) in g.value(y).data().iter().zip(&b.y) {
            sse += (p - t) * (p - t);
        }
        count += b.y.len();
    }
    Ok(sse / count as f64)
}

fn wrap(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} (epoch {epoch}, batch {batch})")),
        e => e,
    }
}

/// Minibatch Adam on the MSE loss.
///
/// With a validation set, training stops once `patience` epochs pass without
/// a strict improvement and the best weights are restored. Without one, all
/// `max_epochs` epochs run and the last weights are kept.
pub fn train(model: &mut NeuralModel, train: &WindowedDataset, val: Option<&WindowedDataset>, cfg: &TrainingConfig) -> Result<History> {
    if train.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::Config("batch size and epoch count must be positive".into()));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);
    let mut adam = Adam::new(cfg.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History { epochs: Vec::new(), best_epoch: 0, best_val_mse: None };
    let mut best_store = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let b = train.batch(chunk);
            let mut g = Graph::new();
            let step = (|| {
                let x = model.inputs(&mut g, &b)?;
                let pred = model.forward(&mut g, &x, Mode::Train, &mut dropout_rng)?;
                let target = g.input(Tensor::new([b.size, b.horizon], b.y.clone())?)?;
                let loss = g.mse_loss(pred, target)?;
                let value = g.value(loss).data()[0];
                model.store.zero_grads();
                g.backward(loss, &mut model.store)?;
                for u in g.take_bn_updates() {
                    u.apply(&mut model.store);
                }
                adam.step(&mut model.store)?;
                if !model.store.all_finite() {
                    return Err(Error::NonFinite("parameter update".into()));
                }
                Ok(value)
            })()
            .map_err(|e| wrap(e, epoch, bi))?;
            weighted += step * chunk.len() as f64;
        }
        let train_mse = weighted / train.len() as f64;
        let val_mse = match val {
            Some(v) => Some(evaluate_mse(model, v).map_err(|e| wrap(e, epoch, usize::MAX))?),
            None => None,
        };
        history.epochs.push(EpochRecord { epoch, train_mse, val_mse });
        match val_mse {
            Some(v) => {
                if history.best_val_mse.is_none_or(|b| v < b) {
                    history.best_val_mse = Some(v);
                    history.best_epoch = epoch;
                    best_store = Some(model.store.clone());
                } else if epoch - history.best_epoch > cfg.patience {
                    break;
                }
            }
            None => history.best_epoch = epoch,
        }
    }
    if let Some(store) = best_store {
        model.store = store;
    }
    model.mark_trained();
    Ok(history)
}
