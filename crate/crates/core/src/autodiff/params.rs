use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named tensor owned by a model. Non-trainable params hold state such as
/// batch-norm running statistics: they are checkpointed but never updated by
/// an optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T = f64> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    pub trainable: bool,
}

/// How a freshly registered parameter is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform on `[-sqrt(3/fan_in), sqrt(3/fan_in)]`, i.e. unit variance
    /// scaled by fan-in.
    FanInUniform { fan_in: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T = f64> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let mut value = Tensor::zeros(shape.to_vec());
        match init {
            Init::Zeros => {}
            Init::Constant(c) => value.data_mut().iter_mut().for_each(|v| *v = T::lit(c)),
            Init::FanInUniform { fan_in } => {
                let limit = libm::sqrt(3.0 / fan_in.max(1) as f64);
                for v in value.data_mut() {
                    *v = T::lit(rng.random_range(-limit..limit));
                }
            }
        }
        self.push(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.push(name.into(), value, false)
    }

    fn push(&mut self, name: String, value: Tensor<T>, trainable: bool) -> ParamId {
        self.params.push(Param { name, value, grad: None, trainable });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param<T>)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Overwrite every value with `v`; buffers included.
    pub fn fill(&mut self, v: f64) {
        for p in &mut self.params {
            p.value.data_mut().iter_mut().for_each(|x| *x = T::lit(v));
        }
    }

    /// Replace values by name, e.g. when loading a checkpoint. Every stored
    /// param must be present in `values` with an identical shape.
    pub fn load(&mut self, values: &[(String, Tensor<T>)]) -> Result<()> {
        for p in &mut self.params {
            let (_, t) = values.iter().find(|(n, _)| *n == p.name).ok_or_else(|| {
                Error::Config(format!("checkpoint has no tensor named `{}`", p.name))
            })?;
            if t.shape() != p.value.shape() {
                return Err(Error::shape(
                    "load",
                    format!("`{}` is {:?}, checkpoint has {:?}", p.name, p.value.shape(), t.shape()),
                ));
            }
            p.value = t.clone();
            p.grad = None;
        }
        Ok(())
    }

    pub fn named_values(&self) -> Vec<(String, Tensor<T>)> {
        self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}
