//! Multilingual compression metrics, differentially private training with
//! Rényi-DP accounting, and checkpoint-based training-data influence.

pub mod accountant;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fmt;
pub mod influence;
pub mod matrix;
pub mod metrics;
pub mod repr_store;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
