//! Datasets, configuration, presets, checkpoints and metric files.

pub mod checkpoint;
pub mod config;
pub mod idx;
pub mod metrics;
pub mod presets;
