//! Memorization run on a small synthetic sample set.

use gustcast_core::autodiff::AdamConfig;
use gustcast_core::data::{generate_synthetic_farm, prepare_farm, PrepConfig, SynthConfig, WindowedDataset};
use gustcast_core::neural::{evaluate_mse, train, ArchConfig, ModelKind, NetShape, NeuralModel, TrainingConfig};
use gustcast_core::Result;

/// 64 windows of synthetic farm 0 at the full 48/24 window lengths.
pub fn overfit_set() -> Result<WindowedDataset> {
    let s = SynthConfig { days: 30, ..SynthConfig::default() };
    let p = PrepConfig { test_days: 5, stride: 5, ..PrepConfig::default() };
    let farm = generate_synthetic_farm(3, 0, &s)?;
    let prep = prepare_farm(&farm.power, &farm.gfs, &farm.arpege, &p)?;
    let idx: Vec<usize> = (0..64).collect();
    Ok(prep.dataset.subset(&idx))
}

pub struct OverfitRun {
    pub initial_mse: f64,
    pub final_mse: f64,
    pub epochs: usize,
}

impl OverfitRun {
    pub fn ratio(&self) -> f64 {
        self.final_mse / self.initial_mse
    }
}

/// Train for up to `epochs` epochs with no validation split; MSE is measured
/// in inference mode before and after.
pub fn overfit(kind: ModelKind, data: &WindowedDataset, epochs: usize) -> Result<OverfitRun> {
    let mut arch = ArchConfig::compact();
    arch.gfs_head.dropout = 0.0;
    arch.arp_head.dropout = 0.0;
    let mut model = NeuralModel::new(kind, arch, NetShape::of(data)?, 1)?;
    let initial_mse = evaluate_mse(&model, data)?;
    let cfg = TrainingConfig {
        batch_size: 16,
        max_epochs: epochs,
        patience: epochs,
        seed: 1,
        adam: AdamConfig { learning_rate: 3e-3, ..AdamConfig::default() },
    };
    let history = train(&mut model, data, None, &cfg)?;
    Ok(OverfitRun { initial_mse, final_mse: evaluate_mse(&model, data)?, epochs: history.epochs.len() })
}
