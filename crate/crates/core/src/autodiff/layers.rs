use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, Init, Mode, Padding, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub units: usize,
}

impl Dense {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, inputs: usize, units: usize, rng: &mut R) -> Self {
        let weight = store.add(format!("{name}.weight"), &[inputs, units], Init::FanInUniform { fan_in: inputs }, rng);
        let bias = store.add(format!("{name}.bias"), &[units], Init::Zeros, rng);
        Dense { weight, bias, inputs, units }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight)?;
        let b = g.param(store, self.bias)?;
        g.dense(x, w, b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv2d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        filters: usize,
        kernel_size: usize,
        stride: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel_size * kernel_size * in_channels;
        let kernel = store.add(
            format!("{name}.kernel"),
            &[kernel_size, kernel_size, in_channels, filters],
            Init::FanInUniform { fan_in },
            rng,
        );
        let bias = store.add(format!("{name}.bias"), &[filters], Init::Zeros, rng);
        Conv2d { kernel, bias, stride, padding }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let k = g.param(store, self.kernel)?;
        let b = g.param(store, self.bias)?;
        g.conv2d(x, k, b, self.stride, self.padding)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.99;

    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, channels: usize, rng: &mut R) -> Self {
        let gamma = store.add(format!("{name}.gamma"), &[channels], Init::Constant(1.0), rng);
        let beta = store.add(format!("{name}.beta"), &[channels], Init::Zeros, rng);
        let running_mean = store.add_buffer(format!("{name}.running_mean"), Tensor::zeros([channels]));
        let running_var = store.add_buffer(format!("{name}.running_var"), Tensor::full([channels], T::one()));
        BatchNorm { gamma, beta, running_mean, running_var, eps: Self::DEFAULT_EPS, momentum: Self::DEFAULT_MOMENTUM }
    }

    /// Train mode normalizes with batch statistics and queues a running-stat
    /// update on the graph; infer mode uses the running statistics only.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, mode: Mode) -> Result<Var> {
        let gamma = g.param(store, self.gamma)?;
        let beta = g.param(store, self.beta)?;
        match mode {
            Mode::Train => {
                g.batchnorm_train(x, gamma, beta, self.eps, Some((self.running_mean, self.running_var, self.momentum)))
            }
            Mode::Infer => {
                let mean = store.value(self.running_mean).data();
                let var = store.value(self.running_var).data();
                g.batchnorm_infer(x, gamma, beta, mean, var, self.eps)
            }
        }
    }
}

/// Hidden and cell state of one LSTM layer, as graph nodes of shape
/// `[batch, units]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmState {
    pub hidden: Var,
    pub cell: Var,
}

impl LstmState {
    pub fn zeros<T: Scalar>(g: &mut Graph<T>, batch: usize, units: usize) -> Result<Self> {
        let hidden = g.input(Tensor::zeros([batch, units]))?;
        let cell = g.input(Tensor::zeros([batch, units]))?;
        Ok(LstmState { hidden, cell })
    }
}

/// Standard LSTM cell without peepholes or projection. Gate blocks are laid
/// out `[input, forget, candidate, output]` along the last axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmCell {
    pub input_weight: ParamId,
    pub recurrent_weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub units: usize,
}

impl LstmCell {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, inputs: usize, units: usize, rng: &mut R) -> Self {
        let input_weight =
            store.add(format!("{name}.input_weight"), &[inputs, 4 * units], Init::FanInUniform { fan_in: inputs }, rng);
        let recurrent_weight =
            store.add(format!("{name}.recurrent_weight"), &[units, 4 * units], Init::FanInUniform { fan_in: units }, rng);
        let bias = store.add(format!("{name}.bias"), &[4 * units], Init::Zeros, rng);
        // forget gate starts open
        for v in &mut store.get_mut(bias).value.data_mut()[units..2 * units] {
            *v = T::one();
        }
        LstmCell { input_weight, recurrent_weight, bias, inputs, units }
    }

    /// One time step: returns the new hidden state (also the cell output) and
    /// the threaded state.
    pub fn step<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, state: LstmState) -> Result<(Var, LstmState)> {
        let sx = g.shape(x);
        if sx.len() != 2 || sx[1] != self.inputs {
            return Err(Error::shape("lstm", format!("input {sx:?}, cell expects [batch, {}]", self.inputs)));
        }
        let batch = sx[0];
        for s in [state.hidden, state.cell] {
            if g.shape(s) != [batch, self.units] {
                return Err(Error::shape("lstm", format!("state {:?}, expected [{batch}, {}]", g.shape(s), self.units)));
            }
        }
        let wx = g.param(store, self.input_weight)?;
        let wh = g.param(store, self.recurrent_weight)?;
        let b = g.param(store, self.bias)?;
        let xw = g.matmul(x, wx)?;
        let hw = g.matmul(state.hidden, wh)?;
        let pre = g.add(xw, hw)?;
        let pre = g.add_bias(pre, b)?;
        let u = self.units;
        let i = g.slice_last(pre, 0, u)?;
        let f = g.slice_last(pre, u, u)?;
        let c_hat = g.slice_last(pre, 2 * u, u)?;
        let o = g.slice_last(pre, 3 * u, u)?;
        let i = g.sigmoid(i)?;
        let f = g.sigmoid(f)?;
        let c_hat = g.tanh(c_hat)?;
        let o = g.sigmoid(o)?;
        let keep = g.mul(f, state.cell)?;
        let write = g.mul(i, c_hat)?;
        let cell = g.add(keep, write)?;
        let squashed = g.tanh(cell)?;
        let hidden = g.mul(o, squashed)?;
        Ok((hidden, LstmState { hidden, cell }))
    }
}

/// Stacked LSTM run over a whole `[batch, steps, features]` sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lstm {
    pub layers: Vec<LstmCell>,
}

impl Lstm {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, inputs: usize, units: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(units.len());
        let mut fan = inputs;
        for (l, &u) in units.iter().enumerate() {
            layers.push(LstmCell::new(store, &format!("{name}.{l}"), fan, u, rng));
            fan = u;
        }
        Lstm { layers }
    }

    pub fn output_units(&self) -> usize {
        self.layers.last().map_or(0, |c| c.units)
    }

    /// Returns the top layer's output sequence `[batch, steps, units]` and
    /// the final state of every layer, bottom first.
    pub fn encode<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, seq: Var) -> Result<(Var, Vec<LstmState>)> {
        let s = g.shape(seq).to_vec();
        if s.len() != 3 {
            return Err(Error::shape("lstm_encode", format!("sequence {s:?} must be [batch, steps, features]")));
        }
        if s[1] == 0 {
            return Err(Error::shape("lstm_encode", "empty sequence"));
        }
        let (batch, steps) = (s[0], s[1]);
        let mut inputs: Vec<Var> = (0..steps).map(|t| g.select_step(seq, t)).collect::<Result<_>>()?;
        let mut finals = Vec::with_capacity(self.layers.len());
        for cell in &self.layers {
            let mut state = LstmState::zeros(g, batch, cell.units)?;
            let mut outputs = Vec::with_capacity(steps);
            for &x in &inputs {
                let (h, next) = cell.step(g, store, x, state)?;
                outputs.push(h);
                state = next;
            }
            finals.push(state);
            inputs = outputs;
        }
        let out = g.stack_steps(&inputs)?;
        Ok((out, finals))
    }
}
