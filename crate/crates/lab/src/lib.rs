//! Experiment pipeline for comparing the K-way energy probe with the softmax
//! readout across predictive-coding training conditions.

pub mod config;
pub mod data;
pub mod figures;
pub mod pipeline;
pub mod records;
pub mod report;
pub mod sweeps;
