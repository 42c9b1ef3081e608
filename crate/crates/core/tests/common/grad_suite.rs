//! Central-difference checks for every differentiable op and for a micro
//! CNN-RNN. Shared by the core gradient tests and the acceptance suite.

use gustcast_core::autodiff::{
    check_gradients, BatchNorm, Conv2d, Dense, GradCheck, GradCheckConfig, Graph, Init, Lstm, LstmCell, LstmState,
    Mode, Padding, ParamStore, Tensor, Var,
};
use gustcast_core::data::GridShape;
use gustcast_core::neural::{ArchConfig, CnnHeadConfig, ModelKind, NetInputs, NetShape, NeuralModel};
use gustcast_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOLERANCE: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Scalar `sum(y * w)` for a fixed random `w`, so every output element
/// carries a distinct weight.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = rand_tensor(&mut rng, g.shape(y));
    let w = g.input(w)?;
    let p = g.mul(y, w)?;
    g.sum(p)
}

type Case = Box<dyn Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>>;

/// Every op case at one seed: `(name, result)`.
pub fn op_cases(seed: u64) -> Vec<(&'static str, Result<GradCheck>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GradCheckConfig::default();
    let mut out = Vec::new();
    let mut run = |name: &'static str, inputs: Vec<Tensor>, mut store: ParamStore, f: Case| {
        out.push((name, check_gradients(&inputs, &mut store, cfg, |g, s, v| f(g, s, v))));
    };
    let empty = ParamStore::new;

    let (a, b) = (rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[3, 4]));
    run("add", vec![a.clone(), b.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.add(v[0], v[1])?;
        project(g, y, seed)
    }));
    run("sub", vec![a.clone(), b.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.sub(v[0], v[1])?;
        project(g, y, seed)
    }));
    run("mul", vec![a.clone(), b.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.mul(v[0], v[1])?;
        project(g, y, seed)
    }));
    run("add_bias", vec![a.clone(), rand_tensor(&mut rng, &[4])], empty(), Box::new(move |g, _, v| {
        let y = g.add_bias(v[0], v[1])?;
        project(g, y, seed)
    }));
    run("matmul", vec![a.clone(), rand_tensor(&mut rng, &[4, 5])], empty(), Box::new(move |g, _, v| {
        let y = g.matmul(v[0], v[1])?;
        project(g, y, seed)
    }));
    let mut store = empty();
    let dense = Dense::new(&mut store, "d", 4, 3, &mut rng);
    store.get_mut(dense.bias).value = rand_tensor(&mut rng, &[3]);
    run("dense", vec![a.clone()], store, Box::new(move |g, s, v| {
        let y = dense.forward(g, s, v[0])?;
        project(g, y, seed)
    }));
    for (name, k, stride, padding) in [
        ("conv2d same k3", 3, 1, Padding::Same),
        ("conv2d same k4", 4, 1, Padding::Same),
        ("conv2d valid k2 s2", 2, 2, Padding::Valid),
        ("conv2d same k2 s2", 2, 2, Padding::Same),
    ] {
        let mut store = empty();
        let conv = Conv2d::new(&mut store, "c", 2, 3, k, stride, padding, &mut rng);
        store.get_mut(conv.bias).value = rand_tensor(&mut rng, &[3]);
        run(name, vec![rand_tensor(&mut rng, &[2, 5, 4, 2])], store, Box::new(move |g, s, v| {
            let y = conv.forward(g, s, v[0])?;
            project(g, y, seed)
        }));
    }
    run("maxpool2d", vec![rand_tensor(&mut rng, &[2, 4, 5, 3])], empty(), Box::new(move |g, _, v| {
        let y = g.maxpool2d(v[0], 2, 2)?;
        project(g, y, seed)
    }));
    run("maxpool2d overlapping", vec![rand_tensor(&mut rng, &[1, 5, 5, 2])], empty(), Box::new(move |g, _, v| {
        let y = g.maxpool2d(v[0], 3, 1)?;
        project(g, y, seed)
    }));
    let mut store = empty();
    let bn = BatchNorm::new(&mut store, "bn", 3, &mut rng);
    store.get_mut(bn.gamma).value = rand_tensor(&mut rng, &[3]);
    store.get_mut(bn.beta).value = rand_tensor(&mut rng, &[3]);
    let x4 = rand_tensor(&mut rng, &[3, 2, 2, 3]);
    let bn_train = bn.clone();
    run("batchnorm train", vec![x4.clone()], store.clone(), Box::new(move |g, s, v| {
        let y = bn_train.forward(g, s, v[0], Mode::Train)?;
        project(g, y, seed)
    }));
    store.get_mut(bn.running_mean).value = rand_tensor(&mut rng, &[3]);
    store.get_mut(bn.running_var).value =
        Tensor::new(vec![3], (0..3).map(|_| rng.random_range(0.5..2.0)).collect()).unwrap();
    run("batchnorm infer", vec![x4], store, Box::new(move |g, s, v| {
        let y = bn.forward(g, s, v[0], Mode::Infer)?;
        project(g, y, seed)
    }));
    for (name, op) in [("relu", 0), ("sigmoid", 1), ("tanh", 2)] {
        run(name, vec![a.clone()], empty(), Box::new(move |g, _, v| {
            let y = match op {
                0 => g.relu(v[0])?,
                1 => g.sigmoid(v[0])?,
                _ => g.tanh(v[0])?,
            };
            project(g, y, seed)
        }));
    }
    run("dropout train", vec![a.clone()], empty(), Box::new(move |g, _, v| {
        // fresh generator per evaluation keeps the mask fixed
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let y = g.dropout(v[0], 0.3, Mode::Train, &mut r)?;
        project(g, y, seed)
    }));
    run("concat", vec![a.clone(), rand_tensor(&mut rng, &[3, 2])], empty(), Box::new(move |g, _, v| {
        let y = g.concat(&[v[0], v[1]])?;
        project(g, y, seed)
    }));
    run("slice_last", vec![a.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.slice_last(v[0], 1, 2)?;
        project(g, y, seed)
    }));
    run("reshape", vec![a.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.reshape(v[0], &[2, 6])?;
        project(g, y, seed)
    }));
    let seq = rand_tensor(&mut rng, &[2, 3, 4]);
    run("select_step", vec![seq.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.select_step(v[0], 1)?;
        project(g, y, seed)
    }));
    run("stack_steps", vec![a.clone(), b.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.stack_steps(&[v[0], v[1]])?;
        project(g, y, seed)
    }));
    run("sum", vec![a.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.tanh(v[0])?;
        g.sum(y)
    }));
    run("mean", vec![a.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.sigmoid(v[0])?;
        g.mean(y)
    }));
    run("scale", vec![a.clone()], empty(), Box::new(move |g, _, v| {
        let y = g.scale(v[0], -1.7)?;
        project(g, y, seed)
    }));
    run("mse_loss", vec![a.clone(), b.clone()], empty(), Box::new(move |g, _, v| g.mse_loss(v[0], v[1])));
    let mut store = empty();
    let cell = LstmCell::new(&mut store, "cell", 4, 3, &mut rng);
    let (h0, c0) = (rand_tensor(&mut rng, &[3, 3]), rand_tensor(&mut rng, &[3, 3]));
    run("lstm cell", vec![a.clone(), h0, c0], store, Box::new(move |g, s, v| {
        let (out, st) = cell.step(g, s, v[0], LstmState { hidden: v[1], cell: v[2] })?;
        let both = g.concat(&[out, st.cell])?;
        project(g, both, seed)
    }));
    let mut store = empty();
    let lstm = Lstm::new(&mut store, "enc", 2, &[3, 2], &mut rng);
    run("lstm encoder", vec![rand_tensor(&mut rng, &[2, 4, 2])], store, Box::new(move |g, s, v| {
        let (seq, finals) = lstm.encode(g, s, v[0])?;
        let last = finals.last().unwrap();
        let flat = g.reshape(seq, &[2, 8])?;
        let both = g.concat(&[flat, last.cell])?;
        project(g, both, seed)
    }));
    let mut store = empty();
    let p = store.add("w", &[3, 4], Init::FanInUniform { fan_in: 4 }, &mut rng);
    run("shared param", vec![a], store, Box::new(move |g, s, v| {
        // the same parameter node used twice accumulates both paths
        let w = g.param(s, p)?;
        let y = g.mul(v[0], w)?;
        let y = g.mul(y, w)?;
        project(g, y, seed)
    }));
    out
}

/// The micro CNN-RNN: 3x3 grids, filters {4, 2}, LSTM units {4, 3},
/// horizon 3, no dropout, checked in train mode (batch statistics).
pub fn micro_cnn_rnn(seed: u64) -> Result<GradCheck> {
    micro_cnn_rnn_cfg(seed, GradCheckConfig::default())
}

pub fn micro_cnn_rnn_cfg(seed: u64, cfg: GradCheckConfig) -> Result<GradCheck> {
    let (batch, lookback, horizon, farms) = (2, 4, 3, 3);
    let gfs = GridShape::new(3, 3, 2);
    let arp = GridShape::new(3, 3, 3);
    let head = CnnHeadConfig { filters: [4, 2], dropout: 0.0, ..CnnHeadConfig::default() };
    let arch = ArchConfig { gfs_head: head, arp_head: head, encoder_units: vec![4, 3], dense_units: vec![5], bn_momentum: 0.9 };
    let shape = NetShape { lookback, horizon, gfs, arp, n_farms: farms };
    let mut model = NeuralModel::new(ModelKind::CnnRnn, arch, shape, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(77));
    // nonzero biases so every branch is exercised
    let ids: Vec<_> = model.store.iter().filter(|(_, p)| p.trainable && p.name.ends_with("bias")).map(|(id, _)| id).collect();
    for id in ids {
        let shape = model.store.value(id).shape().to_vec();
        model.store.get_mut(id).value = rand_tensor(&mut rng, &shape);
    }
    let rows = batch * horizon;
    let mut farm = vec![0.0; rows * farms];
    let mut dec = Vec::new();
    let time = rand_tensor(&mut rng, &[rows, 4]);
    for r in 0..rows {
        farm[r * farms + (r / horizon) % farms] = 1.0;
        dec.extend_from_slice(&time.data()[r * 4..r * 4 + 4]);
        dec.extend_from_slice(&farm[r * farms..(r + 1) * farms]);
    }
    let inputs = vec![
        rand_tensor(&mut rng, &[batch, lookback, 1]),
        rand_tensor(&mut rng, &[rows, 3, 3, 2]),
        rand_tensor(&mut rng, &[rows, 3, 3, 3]),
        time,
        Tensor::new(vec![rows, farms], farm).unwrap(),
        Tensor::new(vec![batch, horizon, 4 + farms], dec).unwrap(),
    ];
    let target = rand_tensor(&mut rng, &[batch, horizon]);
    let mut store = std::mem::take(&mut model.store);
    check_gradients(&inputs, &mut store, cfg, |g, s, v| {
        let x = NetInputs { batch, lags: v[0], gfs: v[1], arp: v[2], time: v[3], farm: v[4], decoder: v[5] };
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let y = model.forward_with(g, s, &x, Mode::Train, &mut r)?;
        let t = g.input(target.clone())?;
        g.mse_loss(y, t)
    })
}
