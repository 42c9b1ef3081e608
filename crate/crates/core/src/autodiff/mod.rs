//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes. Parameters live
//! in a [`ParamStore`] outside the graph; [`Graph::param`] copies a parameter
//! in as a tracked leaf and [`Graph::backward`] writes the resulting gradients
//! back into the store, where an optimizer picks them up.

mod gradcheck;
mod graph;
mod kernels;
mod layers;
mod optim;
mod params;
mod scalar;
mod tensor;

pub use gradcheck::{check_gradients, GradCheck, GradCheckConfig};
pub use graph::{BatchNormUpdate, Graph, Mode, Padding, Var};
pub use layers::{BatchNorm, Conv2d, Dense, Lstm, LstmCell, LstmState};
pub use optim::{Adam, AdamConfig, Sgd};
pub use params::{Init, Param, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
