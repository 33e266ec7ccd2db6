//! Clock-driven spiking neural network engine.
//!
//! Current-based LIF neurons with homeostatic thresholds, trace-based STDP,
//! winner-take-all competition inside receptive fields, multi-pathway
//! (FC/LC) modules, and pooling-reshape-activate layers that make those
//! modules stackable.

pub mod codec;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod io;
pub mod network;
pub mod plasticity;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};

/// Side length of the square input grid.
pub const GRID: usize = 28;
/// Pixels per input channel.
pub const GRID_AREA: usize = GRID * GRID;
/// Digit classes.
pub const CLASSES: usize = 10;
