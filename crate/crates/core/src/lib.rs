//! Core of the gustcast day-ahead wind-power forecaster.
//!
//! Everything in this crate is pure computation over in-memory data and only
//! needs `alloc`: the reverse-mode tensor engine, the windowing pipeline and
//! synthetic farm generator, the tree baselines, the CNN and CNN-RNN
//! forecasters, metrics and the paired t-test, and the experiment runner that
//! ties them together. File formats and the command line live in the
//! `gustcast` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod matrix;
pub mod neural;
pub mod trees;

pub use error::{Error, Result};
pub use matrix::Matrix;
