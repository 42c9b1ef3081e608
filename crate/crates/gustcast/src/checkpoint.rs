//! Versioned JSON containers for fitted models.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use gustcast_core::autodiff::Tensor;
use gustcast_core::experiment::FittedModel;
use gustcast_core::neural::{ModelSpecRecord, NeuralModel};
use gustcast_core::trees::{DirectMultiStep, GbmModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::create;

pub const CHECKPOINT_FORMAT: &str = "gustcast-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CheckpointBody {
    Neural { spec: ModelSpecRecord, params: Vec<NamedTensor> },
    DirectMultistep { model: DirectMultiStep },
    Hybrid { model: GbmModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// `None` for a model fitted on all farms.
    pub farm: Option<usize>,
    #[serde(flatten)]
    pub body: CheckpointBody,
}

impl Checkpoint {
    pub fn of(model: &FittedModel) -> Self {
        let (farm, body) = match model {
            FittedModel::Baseline { farm, model } => (*farm, CheckpointBody::DirectMultistep { model: model.clone() }),
            FittedModel::Neural { farm, model } => {
                let params = model
                    .store
                    .named_values()
                    .into_iter()
                    .map(|(name, t)| NamedTensor { name, shape: t.shape().to_vec(), data: t.data().to_vec() })
                    .collect();
                (*farm, CheckpointBody::Neural { spec: model.spec_record(), params })
            }
            FittedModel::Hybrid { farm, model } => (Some(*farm), CheckpointBody::Hybrid { model: model.clone() }),
        };
        Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, farm, body }
    }

    pub fn into_model(self) -> std::result::Result<FittedModel, gustcast_core::Error> {
        Ok(match self.body {
            CheckpointBody::DirectMultistep { model } => FittedModel::Baseline { farm: self.farm, model },
            CheckpointBody::Hybrid { model } => FittedModel::Hybrid {
                farm: self.farm.ok_or_else(|| gustcast_core::Error::Config("hybrid checkpoint without a farm".into()))?,
                model,
            },
            CheckpointBody::Neural { spec, params } => {
                let weights = params
                    .into_iter()
                    .map(|p| Tensor::new(p.shape, p.data).map(|t| (p.name, t)))
                    .collect::<gustcast_core::Result<Vec<_>>>()?;
                FittedModel::Neural { farm: self.farm, model: NeuralModel::from_record(&spec, &weights)? }
            }
        })
    }
}

/// Compact JSON; tree ensembles can hold millions of nodes.
pub fn save_checkpoint(path: &Path, model: &FittedModel) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &Checkpoint::of(model)).map_err(|e| CliError::json(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FittedModel> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let c: Checkpoint = serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::json(path, e))?;
    if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
        return Err(CliError::format(path, format!("unsupported checkpoint {} v{}", c.format, c.version)));
    }
    c.into_model().map_err(|e| CliError::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use gustcast_core::data::GridShape;
    use gustcast_core::neural::{ArchConfig, ModelKind, NetShape};
    use gustcast_core::trees::{fit_direct_multistep, ModelSpec};
    use gustcast_core::Matrix;

    use super::*;

    #[test]
    fn neural_round_trip_is_exact() {
        let shape = NetShape { lookback: 4, horizon: 2, gfs: GridShape::new(3, 3, 2), arp: GridShape::new(3, 3, 2), n_farms: 2 };
        let m = NeuralModel::new(ModelKind::CnnRnn, ArchConfig::compact(), shape, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_checkpoint(&p, &FittedModel::Neural { farm: Some(1), model: m.clone() }).unwrap();
        let FittedModel::Neural { farm, model } = load_checkpoint(&p).unwrap() else { panic!() };
        assert_eq!(farm, Some(1));
        assert_eq!(model.store, m.store);
        assert!(model.is_trained());
    }

    #[test]
    fn tree_round_trip_and_version_check() {
        let x = Matrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = Matrix::new(4, 1, vec![0.5, 1.5, 2.0, 3.25]).unwrap();
        let m = fit_direct_multistep(&[x], &y, &ModelSpec::Linear, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_checkpoint(&p, &FittedModel::Baseline { farm: None, model: m.clone() }).unwrap();
        let FittedModel::Baseline { model, .. } = load_checkpoint(&p).unwrap() else { panic!() };
        assert_eq!(model, m);
        let text = std::fs::read_to_string(&p).unwrap().replace("\"version\":1", "\"version\":9");
        std::fs::write(&p, text).unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
