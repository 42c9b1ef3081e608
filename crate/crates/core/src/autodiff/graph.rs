use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::{ParamId, ParamStore, Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Batch statistics observed by a train-mode batch norm, to be folded into
/// the running statistics once the step is done.
#[derive(Debug, Clone)]
pub struct BatchNormUpdate<T> {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

impl<T: Scalar> BatchNormUpdate<T> {
    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn apply(&self, store: &mut ParamStore<T>) {
        let m = T::lit(self.momentum);
        let one_m = T::one() - m;
        for (id, batch) in [(self.running_mean, &self.batch_mean), (self.running_var, &self.batch_var)] {
            let run = store.get_mut(id).value.data_mut();
            for (r, &b) in run.iter_mut().zip(batch) {
                *r = m * *r + one_m * b;
            }
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Conv2d { input: Var, kernel: Var, bias: Var, geom: ConvGeom },
    MaxPool { input: Var, argmax: Vec<usize> },
    BatchNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Dropout { input: Var, mask: Vec<T> },
    Concat(Vec<Var>),
    Slice { input: Var, start: usize },
    Reshape(Var),
    SelectStep { input: Var, index: usize },
    StackSteps(Vec<Var>),
    Sum(Var),
    Mean(Var),
    Scale(Var, T),
    Mse(Var, Var),
}

/// Tape of tensor operations. Build it forward, call [`backward`] once.
///
/// [`backward`]: Graph::backward
#[derive(Debug)]
pub struct Graph<T = f64> {
    values: Vec<Tensor<T>>,
    ops: Vec<Op<T>>,
    tracked: Vec<bool>,
    grads: Vec<Option<Tensor<T>>>,
    params: BTreeMap<ParamId, Var>,
    bn_updates: Vec<BatchNormUpdate<T>>,
    retain: bool,
    consumed: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            ops: Vec::new(),
            tracked: Vec::new(),
            grads: Vec::new(),
            params: BTreeMap::new(),
            bn_updates: Vec::new(),
            retain: false,
            consumed: false,
        }
    }

    /// A graph that allows repeated [`backward`](Graph::backward) calls.
    pub fn retaining() -> Self {
        Graph { retain: true, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(String::from(name)));
        }
        self.values.push(value);
        self.ops.push(op);
        self.tracked.push(tracked);
        Ok(Var(self.values.len() - 1))
    }

    fn t(&self, v: Var) -> bool {
        self.tracked[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.tracked[v.0]
    }

    /// Gradient of the last backward pass w.r.t. `v`, if `v` is tracked.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Constant input; never differentiated.
    pub fn input(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Input, false, "input")
    }

    /// Tracked leaf that is not a stored parameter; read its gradient with
    /// [`grad`](Graph::grad).
    pub fn leaf(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Leaf, true, "leaf")
    }

    /// Bring a stored parameter into the graph. Repeated calls with the same
    /// id return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Param(id), p.trainable, "param")?;
        self.params.insert(id, v);
        Ok(v)
    }

    pub fn take_bn_updates(&mut self) -> Vec<BatchNormUpdate<T>> {
        core::mem::take(&mut self.bn_updates)
    }

    fn zip_map(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        same_shape(name, self.shape(a), self.shape(b))?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let tracked = self.t(a) || self.t(b);
        self.push(out, op, tracked, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// `x[..., c] + bias[c]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = self.value(x).last_dim();
        if self.shape(bias) != [c] {
            return Err(Error::shape("add_bias", format!("bias {:?} for last axis {c}", self.shape(bias))));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_exact_mut(c) {
            add_into(row, &b);
        }
        let tracked = self.t(x) || self.t(bias);
        self.push(out, Op::AddBias(x, bias), tracked, "add_bias")
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        kernels::matmul(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let tracked = self.t(a) || self.t(b);
        self.push(Tensor::new([m, n], out)?, Op::MatMul(a, b), tracked, "matmul")
    }

    /// Affine map `x W + b` for `x: [B, F]`, `W: [F, U]`, `b: [U]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// 2-D convolution over NHWC input with an `[kh, kw, cin, cout]` kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (si, sk) = (self.shape(input), self.shape(kernel));
        if si.len() != 4 || sk.len() != 4 {
            return Err(Error::shape("conv2d", format!("input {si:?}, kernel {sk:?}; both must be rank 4")));
        }
        if stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        let (batch, h, w, cin) = (si[0], si[1], si[2], si[3]);
        let (kh, kw, kcin, cout) = (sk[0], sk[1], sk[2], sk[3]);
        if kcin != cin {
            return Err(Error::shape("conv2d", format!("kernel expects {kcin} input channels, input has {cin}")));
        }
        if self.shape(bias) != [cout] {
            return Err(Error::shape("conv2d", format!("bias {:?} for {cout} filters", self.shape(bias))));
        }
        let (oh, ow, pad_top, pad_left) = match padding {
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(Error::shape("conv2d", format!("kernel {kh}x{kw} larger than input {h}x{w}")));
                }
                ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0)
            }
            Padding::Same => {
                let oh = h.div_ceil(stride);
                let ow = w.div_ceil(stride);
                let pad_h = ((oh - 1) * stride + kh).saturating_sub(h);
                let pad_w = ((ow - 1) * stride + kw).saturating_sub(w);
                (oh, ow, pad_h / 2, pad_w / 2)
            }
        };
        let geom = ConvGeom { batch, h, w, cin, kh, kw, cout, stride, oh, ow, pad_top, pad_left };
        let mut out = vec![T::zero(); batch * oh * ow * cout];
        kernels::conv2d(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &mut out,
        );
        let tracked = self.t(input) || self.t(kernel) || self.t(bias);
        let value = Tensor::new([batch, oh, ow, cout], out)?;
        self.push(value, Op::Conv2d { input, kernel, bias, geom }, tracked, "conv2d")
    }

    /// Max pooling over NHWC input, square `window`, no padding.
    pub fn maxpool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let s = self.shape(input);
        if s.len() != 4 {
            return Err(Error::shape("maxpool2d", format!("input {s:?} must be rank 4")));
        }
        if window == 0 || stride == 0 {
            return Err(Error::param("window", "window and stride must be positive"));
        }
        let (batch, h, w, c) = (s[0], s[1], s[2], s[3]);
        if h < window || w < window {
            return Err(Error::shape("maxpool2d", format!("{h}x{w} input smaller than {window}x{window} window")));
        }
        let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
        let mut out = vec![T::zero(); batch * oh * ow * c];
        let mut argmax = vec![0; out.len()];
        kernels::maxpool2d(self.value(input).data(), batch, h, w, c, window, stride, oh, ow, &mut out, &mut argmax);
        let tracked = self.t(input);
        self.push(Tensor::new([batch, oh, ow, c], out)?, Op::MaxPool { input, argmax }, tracked, "maxpool2d")
    }

    /// Train-mode batch norm over every axis but the last. Batch statistics
    /// are queued for `running` (mean, var) when given.
    pub fn batchnorm_train(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        running: Option<(ParamId, ParamId, f64)>,
    ) -> Result<Var> {
        let x = self.value(input);
        let c = x.last_dim();
        let n = x.len() / c;
        if n < 2 {
            return Err(Error::shape("batchnorm", "train mode needs at least two values per channel"));
        }
        if x.shape()[0] < 2 {
            return Err(Error::shape("batchnorm", "train mode needs a batch of at least 2"));
        }
        self.check_affine(gamma, beta, c)?;
        let (mean, var) = kernels::channel_moments(x.data(), c);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::lit(eps)).sqrt()).collect();
        let (value, xhat) = self.normalize(input, gamma, beta, &mean, &inv_std)?;
        if let Some((running_mean, running_var, momentum)) = running {
            self.bn_updates.push(BatchNormUpdate { running_mean, running_var, momentum, batch_mean: mean, batch_var: var });
        }
        let tracked = self.t(input) || self.t(gamma) || self.t(beta);
        self.push(value, Op::BatchNorm { input, gamma, beta, xhat, inv_std, train: true }, tracked, "batchnorm")
    }

    /// Inference batch norm with fixed statistics.
    pub fn batchnorm_infer(&mut self, input: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: f64) -> Result<Var> {
        let c = self.value(input).last_dim();
        self.check_affine(gamma, beta, c)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("batchnorm", format!("running stats of length {} for {c} channels", mean.len())));
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::lit(eps)).sqrt()).collect();
        let (value, xhat) = self.normalize(input, gamma, beta, mean, &inv_std)?;
        let tracked = self.t(input) || self.t(gamma) || self.t(beta);
        self.push(value, Op::BatchNorm { input, gamma, beta, xhat, inv_std, train: false }, tracked, "batchnorm")
    }

    fn check_affine(&self, gamma: Var, beta: Var, c: usize) -> Result<()> {
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(
                "batchnorm",
                format!("gamma {:?} / beta {:?} for {c} channels", self.shape(gamma), self.shape(beta)),
            ));
        }
        Ok(())
    }

    fn normalize(&self, input: Var, gamma: Var, beta: Var, mean: &[T], inv_std: &[T]) -> Result<(Tensor<T>, Vec<T>)> {
        let x = self.value(input);
        let c = x.last_dim();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = x.data().to_vec();
        let mut out = x.clone();
        for (xr, or) in xhat.chunks_exact_mut(c).zip(out.data_mut().chunks_exact_mut(c)) {
            for ch in 0..c {
                let z = (xr[ch] - mean[ch]) * inv_std[ch];
                xr[ch] = z;
                or[ch] = g[ch] * z + b[ch];
            }
        }
        Ok((out, xhat))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let tracked = self.t(x);
        self.push(out, Op::Relu(x), tracked, "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        let tracked = self.t(x);
        self.push(out, Op::Sigmoid(x), tracked, "sigmoid")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.tanh());
        let tracked = self.t(x);
        self.push(out, Op::Tanh(x), tracked, "tanh")
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::param("dropout rate", format!("{rate} is outside [0, 1)")));
        }
        if mode == Mode::Infer || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let mut out = self.value(x).clone();
        for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
            *o = *o * m;
        }
        let tracked = self.t(x);
        self.push(out, Op::Dropout { input: x, mask }, tracked, "dropout")
    }

    /// Concatenate along the last axis; leading axes must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let lead = &self.shape(first)[..self.shape(first).len() - 1];
        let rows: usize = lead.iter().product();
        let mut width = 0;
        for &x in xs {
            let s = self.shape(x);
            if &s[..s.len() - 1] != lead {
                return Err(Error::shape("concat", format!("{:?} vs {s:?}", self.shape(first))));
            }
            width += s[s.len() - 1];
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &x in xs {
                let c = self.value(x).last_dim();
                out.extend_from_slice(&self.value(x).data()[r * c..(r + 1) * c]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(width);
        let tracked = xs.iter().any(|&x| self.t(x));
        self.push(Tensor::new(shape, out)?, Op::Concat(xs.to_vec()), tracked, "concat")
    }

    /// `x[..., start..start + len]`.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let c = self.value(x).last_dim();
        if len == 0 || start + len > c {
            return Err(Error::shape("slice_last", format!("{start}..{} of axis with {c}", start + len)));
        }
        let data = self.value(x).data().chunks_exact(c).flat_map(|row| row[start..start + len].iter().copied()).collect();
        let mut shape = self.shape(x).to_vec();
        *shape.last_mut().expect("rank >= 1") = len;
        let tracked = self.t(x);
        self.push(Tensor::new(shape, data)?, Op::Slice { input: x, start }, tracked, "slice_last")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        let tracked = self.t(x);
        self.push(out, Op::Reshape(x), tracked, "reshape")
    }

    /// `x[:, index, ...]` of a tensor with at least two axes.
    pub fn select_step(&mut self, x: Var, index: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 || index >= s[1] {
            return Err(Error::shape("select_step", format!("step {index} of {s:?}")));
        }
        let inner: usize = s[2..].iter().product();
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(s[0] * inner);
        for b in 0..s[0] {
            let off = (b * s[1] + index) * inner;
            out.extend_from_slice(&data[off..off + inner]);
        }
        let mut shape = vec![s[0]];
        shape.extend_from_slice(&s[2..]);
        if shape.len() == 1 {
            shape.push(1);
        }
        let tracked = self.t(x);
        self.push(Tensor::new(shape, out)?, Op::SelectStep { input: x, index }, tracked, "select_step")
    }

    /// Stack `[B, ...]` tensors into `[B, steps, ...]`.
    pub fn stack_steps(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::shape("stack_steps", "no inputs"))?;
        let s = self.shape(first).to_vec();
        for &x in xs {
            same_shape("stack_steps", &s, self.shape(x))?;
        }
        let inner: usize = s[1..].iter().product();
        let mut out = Vec::with_capacity(s[0] * xs.len() * inner);
        for b in 0..s[0] {
            for &x in xs {
                out.extend_from_slice(&self.value(x).data()[b * inner..(b + 1) * inner]);
            }
        }
        let mut shape = vec![s[0], xs.len()];
        shape.extend_from_slice(&s[1..]);
        let tracked = xs.iter().any(|&x| self.t(x));
        self.push(Tensor::new(shape, out)?, Op::StackSteps(xs.to_vec()), tracked, "stack_steps")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum();
        let tracked = self.t(x);
        self.push(Tensor::scalar(s), Op::Sum(x), tracked, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let s: T = v.data().iter().copied().sum();
        let m = s / T::lit(v.len() as f64);
        let tracked = self.t(x);
        self.push(Tensor::scalar(m), Op::Mean(x), tracked, "mean")
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let k = T::lit(k);
        let out = self.value(x).map(|v| v * k);
        let tracked = self.t(x);
        self.push(out, Op::Scale(x, k), tracked, "scale")
    }

    /// Mean of squared differences over every element.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape("mse_loss", self.shape(pred), self.shape(target))?;
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let s: T = p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let m = s / T::lit(p.len() as f64);
        let tracked = self.t(pred) || self.t(target);
        self.push(Tensor::scalar(m), Op::Mse(pred, target), tracked, "mse_loss")
    }

    /// Reverse pass from the scalar `loss`. Gradients of tracked leaves are
    /// kept on the graph; gradients of params are written into `store`
    /// (every other param's gradient is cleared).
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if self.consumed {
            return Err(Error::Graph(String::from(
                "backward already ran on this graph; rebuild the forward pass or use Graph::retaining",
            )));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Graph(format!("loss must be a scalar, got shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.values.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.tracked[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        for g in grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(String::from("backward")));
            }
        }

        store.zero_grads();
        self.grads = vec![None; self.values.len()];
        for (i, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            if !matches!(self.ops[i], Op::Leaf | Op::Param(_)) {
                continue;
            }
            let t = Tensor::new(self.values[i].shape().to_vec(), g)?;
            if let Op::Param(id) = self.ops[i] {
                store.get_mut(id).grad = Some(t.clone());
            }
            self.grads[i] = Some(t);
        }
        if !self.retain {
            self.consumed = true;
            for op in &mut self.ops {
                match op {
                    Op::BatchNorm { xhat, .. } => *xhat = Vec::new(),
                    Op::Dropout { mask, .. } => *mask = Vec::new(),
                    Op::MaxPool { argmax, .. } => *argmax = Vec::new(),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        // Accumulates `f(k)` into grads[v][k] for tracked v.
        let mut acc = |v: Var, f: &dyn Fn(usize) -> T| {
            if !self.tracked[v.0] {
                return;
            }
            let n = self.values[v.0].len();
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); n]);
            for (k, s) in slot.iter_mut().enumerate() {
                *s = *s + f(k);
            }
        };
        let val = |v: Var| self.values[v.0].data();
        match &self.ops[i] {
            Op::Input | Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                acc(*a, &|k| g[k]);
                acc(*b, &|k| g[k]);
            }
            Op::Sub(a, b) => {
                acc(*a, &|k| g[k]);
                acc(*b, &|k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &|k| g[k] * vb[k]);
                acc(*b, &|k| g[k] * va[k]);
            }
            Op::AddBias(x, b) => {
                acc(*x, &|k| g[k]);
                let c = self.values[b.0].len();
                let mut db = vec![T::zero(); c];
                for row in g.chunks_exact(c) {
                    add_into(&mut db, row);
                }
                acc(*b, &|k| db[k]);
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.values[a.0].shape(), self.values[b.0].shape());
                let (m, kk, n) = (sa[0], sa[1], sb[1]);
                let mut da = self.tracked[a.0].then(|| vec![T::zero(); m * kk]);
                let mut db = self.tracked[b.0].then(|| vec![T::zero(); kk * n]);
                kernels::matmul_backward(val(*a), val(*b), g, da.as_deref_mut(), db.as_deref_mut(), m, kk, n);
                if let Some(da) = da {
                    acc(*a, &|k| da[k]);
                }
                if let Some(db) = db {
                    acc(*b, &|k| db[k]);
                }
            }
            Op::Conv2d { input, kernel, bias, geom } => {
                let mut di = self.tracked[input.0].then(|| vec![T::zero(); self.values[input.0].len()]);
                let mut dk = self.tracked[kernel.0].then(|| vec![T::zero(); self.values[kernel.0].len()]);
                let mut db = self.tracked[bias.0].then(|| vec![T::zero(); geom.cout]);
                kernels::conv2d_backward(
                    geom,
                    val(*input),
                    val(*kernel),
                    g,
                    di.as_deref_mut(),
                    dk.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(d) = di {
                    acc(*input, &|k| d[k]);
                }
                if let Some(d) = dk {
                    acc(*kernel, &|k| d[k]);
                }
                if let Some(d) = db {
                    acc(*bias, &|k| d[k]);
                }
            }
            Op::MaxPool { input, argmax } => {
                let mut d = vec![T::zero(); self.values[input.0].len()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    d[src] = d[src] + gv;
                }
                acc(*input, &|k| d[k]);
            }
            Op::BatchNorm { input, gamma, beta, xhat, inv_std, train } => {
                let c = inv_std.len();
                let gam = val(*gamma);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for (gr, xr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for ch in 0..c {
                        dgamma[ch] = dgamma[ch] + gr[ch] * xr[ch];
                        dbeta[ch] = dbeta[ch] + gr[ch];
                    }
                }
                if self.tracked[input.0] {
                    let mut dx = vec![T::zero(); g.len()];
                    if *train {
                        let n = T::lit((g.len() / c) as f64);
                        // sum(dxhat) = gamma * dbeta, sum(dxhat * xhat) = gamma * dgamma
                        for ((dr, gr), xr) in dx.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
                            for ch in 0..c {
                                let dxhat = gr[ch] * gam[ch];
                                dr[ch] = inv_std[ch] / n
                                    * (n * dxhat - gam[ch] * dbeta[ch] - xr[ch] * gam[ch] * dgamma[ch]);
                            }
                        }
                    } else {
                        for (dr, gr) in dx.chunks_exact_mut(c).zip(g.chunks_exact(c)) {
                            for ch in 0..c {
                                dr[ch] = gr[ch] * gam[ch] * inv_std[ch];
                            }
                        }
                    }
                    acc(*input, &|k| dx[k]);
                }
                acc(*gamma, &|k| dgamma[k]);
                acc(*beta, &|k| dbeta[k]);
            }
            Op::Relu(x) => {
                let vx = val(*x);
                acc(*x, &|k| if vx[k] > T::zero() { g[k] } else { T::zero() });
            }
            Op::Sigmoid(x) => {
                let y = self.values[i].data();
                acc(*x, &|k| g[k] * y[k] * (T::one() - y[k]));
            }
            Op::Tanh(x) => {
                let y = self.values[i].data();
                acc(*x, &|k| g[k] * (T::one() - y[k] * y[k]));
            }
            Op::Dropout { input, mask } => acc(*input, &|k| g[k] * mask[k]),
            Op::Concat(xs) => {
                let width = self.values[i].last_dim();
                let mut off = 0;
                for &x in xs {
                    let c = self.values[x.0].last_dim();
                    acc(x, &|k| g[(k / c) * width + off + k % c]);
                    off += c;
                }
            }
            Op::Slice { input, start } => {
                let c = self.values[input.0].last_dim();
                let len = self.values[i].last_dim();
                acc(*input, &|k| {
                    let col = k % c;
                    if col >= *start && col < start + len {
                        g[(k / c) * len + col - start]
                    } else {
                        T::zero()
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &|k| g[k]),
            Op::SelectStep { input, index } => {
                let s = self.values[input.0].shape();
                let inner: usize = s[2..].iter().product();
                let steps = s[1];
                acc(*input, &|k| {
                    let b = k / (steps * inner);
                    let t = (k / inner) % steps;
                    if t == *index {
                        g[b * inner + k % inner]
                    } else {
                        T::zero()
                    }
                });
            }
            Op::StackSteps(xs) => {
                let inner = self.values[xs[0].0].len() / self.values[xs[0].0].shape()[0];
                let steps = xs.len();
                for (t, &x) in xs.iter().enumerate() {
                    acc(x, &|k| g[((k / inner) * steps + t) * inner + k % inner]);
                }
            }
            Op::Sum(x) => acc(*x, &|_| g[0]),
            Op::Mean(x) => {
                let n = T::lit(self.values[x.0].len() as f64);
                acc(*x, &|_| g[0] / n);
            }
            Op::Scale(x, s) => acc(*x, &|k| g[k] * *s),
            Op::Mse(p, t) => {
                let (vp, vt) = (val(*p), val(*t));
                let scale = T::lit(2.0) * g[0] / T::lit(vp.len() as f64);
                acc(*p, &|k| scale * (vp[k] - vt[k]));
                acc(*t, &|k| -scale * (vp[k] - vt[k]));
            }
        }
        Ok(())
    }
}
