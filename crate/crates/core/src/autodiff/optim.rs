use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{ParamStore, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Bias-corrected Adam. Moment buffers are created lazily on the first step
/// and mirror the trainable params of the store they are used with.
#[derive(Debug, Clone)]
pub struct Adam<T = f64> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Option<Tensor<T>>>,
    second: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Update every trainable param from its gradient. A trainable param
    /// without a gradient is an error and leaves the store untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if let Some((_, p)) = store.iter().find(|(_, p)| p.trainable && p.grad.is_none()) {
            return Err(Error::Graph(format!("no gradient for trainable parameter `{}`", p.name)));
        }
        if self.first.len() < store.len() {
            self.first.resize(store.len(), None);
            self.second.resize(store.len(), None);
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (lr, eps) = (T::lit(learning_rate), T::lit(epsilon));
        let (bc1, bc2) = (T::lit(bc1), T::lit(bc2));
        for (id, p) in store.iter_mut() {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.as_ref().expect("checked above");
            let m = self.first[id.index()].get_or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
            let v = self.second[id.index()].get_or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
            for (((w, &gr), m), v) in
                p.value.data_mut().iter_mut().zip(grad.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *m = b1 * *m + (T::one() - b1) * gr;
                *v = b2 * *v + (T::one() - b2) * gr * gr;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Sgd {
    pub fn step<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let lr = T::lit(self.learning_rate);
        for (_, p) in store.iter_mut() {
            if !p.trainable {
                continue;
            }
            let g = p.grad.as_ref().ok_or_else(|| Error::Graph(format!("no gradient for `{}`", p.name)))?;
            for (w, &gr) in p.value.data_mut().iter_mut().zip(g.data()) {
                *w = *w - lr * gr;
            }
        }
        Ok(())
    }
}
