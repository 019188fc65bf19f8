//! Persistence and plumbing: checkpoints, run configuration, metrics CSV,
//! episode traces and seed derivation.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod rng;
pub mod trace;
