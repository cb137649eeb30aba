//! Predictive-coding networks under three energy formulations, the K-way
//! energy probe and softmax readouts, Type-2 AUROC, temperature scaling,
//! hypothesis tests and diagnostics.

pub mod adamw;
pub mod checkpoint;
pub mod error;
pub mod fixtures;
pub mod gemm;
pub mod gradcheck;
pub mod hypotheses;
pub mod diagnostics;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod par;
pub mod probe;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use adamw::{AdamWConfig, AdamWState};
pub use error::{Error, Result};
pub use tensor::Tensor;
