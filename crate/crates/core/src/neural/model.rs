use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArchConfig, CnnHead, ModelKind, NetShape};
use crate::autodiff::{Dense, Graph, LstmCell, Lstm, LstmState, Mode, ParamStore, Tensor, Var};
use crate::data::{Batch, WindowedDataset, TIME_FEATURES};
use crate::{Error, Matrix, Result};

/// Graph nodes holding one batch of inputs.
#[derive(Debug, Clone, Copy)]
pub struct NetInputs {
    pub batch: usize,
    /// `[B, lookback, 1]`
    pub lags: Var,
    /// `[B * horizon, h, w, c]`
    pub gfs: Var,
    pub arp: Var,
    /// `[B * horizon, 4]`
    pub time: Var,
    /// `[B * horizon, farms]`
    pub farm: Var,
    /// `[B, horizon, 4 + farms]`
    pub decoder: Var,
}

/// A CNN or CNN-RNN forecaster with its parameters.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub kind: ModelKind,
    pub arch: ArchConfig,
    pub shape: NetShape,
    pub seed: u64,
    pub store: ParamStore,
    gfs_head: CnnHead,
    arp_head: CnnHead,
    encoder: Option<Lstm>,
    decoder: Option<LstmCell>,
    dense: Vec<Dense>,
    output: Dense,
    trained: bool,
}

/// Layer layout without weights, for persisting alongside a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecRecord {
    pub kind: ModelKind,
    pub arch: ArchConfig,
    pub shape: NetShape,
    pub seed: u64,
}

impl NeuralModel {
    pub fn new(kind: ModelKind, arch: ArchConfig, shape: NetShape, seed: u64) -> Result<Self> {
        if shape.horizon == 0 || shape.n_farms == 0 {
            return Err(Error::Config("horizon and farm count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let gfs_head = CnnHead::new(&mut store, "gfs", arch.gfs_head, shape.gfs, arch.bn_momentum, &mut rng)?;
        let arp_head = CnnHead::new(&mut store, "arpege", arch.arp_head, shape.arp, arch.bn_momentum, &mut rng)?;
        let (encoder, decoder, temporal) = match kind {
            ModelKind::Cnn => (None, None, 0),
            ModelKind::CnnRnn => {
                if arch.encoder_units.is_empty() || shape.lookback == 0 {
                    return Err(Error::Config("the CNN-RNN needs encoder units and a lookback".into()));
                }
                let enc = Lstm::new(&mut store, "encoder", 1, &arch.encoder_units, &mut rng);
                let units = enc.output_units();
                let dec = LstmCell::new(&mut store, "decoder", TIME_FEATURES + shape.n_farms, units, &mut rng);
                (Some(enc), Some(dec), units)
            }
        };
        let mut width = temporal + gfs_head.output_width + arp_head.output_width + TIME_FEATURES + shape.n_farms;
        let mut dense = Vec::with_capacity(arch.dense_units.len());
        for (l, &u) in arch.dense_units.iter().enumerate() {
            dense.push(Dense::new(&mut store, &format!("dense.{l}"), width, u, &mut rng));
            width = u;
        }
        let output = Dense::new(&mut store, "output", width, 1, &mut rng);
        Ok(NeuralModel { kind, arch, shape, seed, store, gfs_head, arp_head, encoder, decoder, dense, output, trained: false })
    }

    pub fn spec_record(&self) -> ModelSpecRecord {
        ModelSpecRecord { kind: self.kind, arch: self.arch.clone(), shape: self.shape, seed: self.seed }
    }

    pub fn from_record(record: &ModelSpecRecord, weights: &[(alloc::string::String, Tensor)]) -> Result<Self> {
        let mut m = NeuralModel::new(record.kind, record.arch.clone(), record.shape, record.seed)?;
        m.store.load(weights)?;
        m.trained = true;
        Ok(m)
    }

    /// Width of the per-step vector entering the dense stack.
    pub fn fused_width(&self) -> usize {
        self.decoder.as_ref().map_or(0, |d| d.units)
            + self.gfs_head.output_width
            + self.arp_head.output_width
            + TIME_FEATURES
            + self.shape.n_farms
    }

    /// Width of the flattened conv features of both sources.
    pub fn conv_feature_width(&self) -> usize {
        self.gfs_head.output_width + self.arp_head.output_width
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Trainable scalars in the two conv heads.
    pub fn head_parameter_count(&self) -> usize {
        self.store
            .iter()
            .filter(|(_, p)| p.trainable && (p.name.starts_with("gfs.") || p.name.starts_with("arpege.")))
            .map(|(_, p)| p.value.len())
            .sum()
    }

    fn check_batch(&self, b: &Batch) -> Result<()> {
        let s = &self.shape;
        if b.horizon != s.horizon || b.gfs_shape != s.gfs || b.arp_shape != s.arp || b.n_farms != s.n_farms {
            return Err(Error::shape(
                "network input",
                format!(
                    "batch horizon {} grids {:?}/{:?} farms {}, network built for {} {:?}/{:?} {}",
                    b.horizon, b.gfs_shape, b.arp_shape, b.n_farms, s.horizon, s.gfs, s.arp, s.n_farms
                ),
            ));
        }
        if self.kind == ModelKind::CnnRnn && b.lookback != s.lookback {
            return Err(Error::shape("network input", format!("{} lags, encoder expects {}", b.lookback, s.lookback)));
        }
        if b.size == 0 {
            return Err(Error::shape("network input", "empty batch"));
        }
        Ok(())
    }

    /// Load a materialized batch into `g` as untracked inputs.
    pub fn inputs(&self, g: &mut Graph, b: &Batch) -> Result<NetInputs> {
        self.check_batch(b)?;
        let (n, h, f) = (b.size, b.horizon, b.n_farms);
        let rows = n * h;
        let grid = |s: crate::data::GridShape| [rows, s.height, s.width, s.channels];
        let lags = g.input(Tensor::new([n, b.lookback.max(1), 1], if b.lookback == 0 { alloc::vec![0.0; n] } else { b.lags.clone() })?)?;
        let gfs = g.input(Tensor::new(grid(b.gfs_shape), b.gfs.clone())?)?;
        let arp = g.input(Tensor::new(grid(b.arp_shape), b.arp.clone())?)?;
        let time = g.input(Tensor::new([rows, TIME_FEATURES], b.time.clone())?)?;
        let mut farm_rows = Vec::with_capacity(rows * f);
        let mut dec = Vec::with_capacity(rows * (TIME_FEATURES + f));
        for i in 0..n {
            let one_hot = &b.farm[i * f..(i + 1) * f];
            for step in 0..h {
                farm_rows.extend_from_slice(one_hot);
                let r = i * h + step;
                dec.extend_from_slice(&b.time[r * TIME_FEATURES..(r + 1) * TIME_FEATURES]);
                dec.extend_from_slice(one_hot);
            }
        }
        let farm = g.input(Tensor::new([rows, f], farm_rows)?)?;
        let decoder = g.input(Tensor::new([n, h, TIME_FEATURES + f], dec)?)?;
        Ok(NetInputs { batch: n, lags, gfs, arp, time, farm, decoder })
    }

    /// Flattened conv features of both sources, `[B * horizon, width]`.
    pub fn conv_features<R: Rng + ?Sized>(&self, g: &mut Graph, x: &NetInputs, mode: Mode, rng: &mut R) -> Result<Var> {
        self.conv_features_with(g, &self.store, x, mode, rng)
    }

    fn conv_features_with<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: &NetInputs,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let a = self.gfs_head.forward(g, store, x.gfs, mode, rng)?;
        let b = self.arp_head.forward(g, store, x.arp, mode, rng)?;
        g.concat(&[a, b])
    }

    /// Predictions `[B, horizon]`.
    pub fn forward<R: Rng + ?Sized>(&self, g: &mut Graph, x: &NetInputs, mode: Mode, rng: &mut R) -> Result<Var> {
        self.forward_with(g, &self.store, x, mode, rng)
    }

    /// [`forward`](Self::forward) with parameters taken from `store`, which
    /// must have this model's layout.
    pub fn forward_with<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: &NetInputs,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let (n, h) = (x.batch, self.shape.horizon);
        let conv = self.conv_features_with(g, store, x, mode, rng)?;
        let fused = match (&self.encoder, &self.decoder) {
            (Some(enc), Some(dec)) => {
                let (_, finals) = enc.encode(g, store, x.lags)?;
                let mut state: LstmState = *finals.last().expect("encoder has layers");
                let mut outs = Vec::with_capacity(h);
                for step in 0..h {
                    let input = g.select_step(x.decoder, step)?;
                    let (out, next) = dec.step(g, store, input, state)?;
                    outs.push(out);
                    state = next;
                }
                let seq = g.stack_steps(&outs)?;
                let seq = g.reshape(seq, &[n * h, dec.units])?;
                g.concat(&[seq, conv, x.time, x.farm])?
            }
            _ => g.concat(&[conv, x.time, x.farm])?,
        };
        let mut z = fused;
        for layer in &self.dense {
            z = layer.forward(g, store, z)?;
            z = g.relu(z)?;
        }
        let out = self.output.forward(g, store, z)?;
        g.reshape(out, &[n, h])
    }

    /// Infer-mode predictions for every sample, `[N, horizon]`.
    pub fn predict(&self, dataset: &WindowedDataset) -> Result<Matrix> {
        let h = self.shape.horizon;
        let mut out = Vec::with_capacity(dataset.len() * h);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for chunk in (0..dataset.len()).collect::<Vec<_>>().chunks(EVAL_CHUNK) {
            let b = dataset.batch(chunk);
            let mut g = Graph::new();
            let x = self.inputs(&mut g, &b)?;
            let y = self.forward(&mut g, &x, Mode::Infer, &mut rng)?;
            out.extend_from_slice(g.value(y).data());
        }
        Matrix::new(dataset.len(), h, out)
    }
}

pub(crate) const EVAL_CHUNK: usize = 256;
