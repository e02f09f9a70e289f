//! Simulation, denoising models and evaluation for NQR free-induction-decay
//! signals.

pub mod ae;
pub mod baselines;
pub mod container;
pub mod ctn;
pub mod cvnn;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod noise;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
pub use signal::{ComplexSeries, SnrRegime, TimeGrid, VoigtParams};
