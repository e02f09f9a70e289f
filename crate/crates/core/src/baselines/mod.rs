//! Classical denoisers used as reference points.

pub mod dc;
pub mod ssa;
pub mod wavelet;

pub use dc::{deconvolve_fit, DcConfig, DcFit};
pub use ssa::{ssa_decompose, ssa_denoise, SsaConfig, SsaOutput};
pub use wavelet::{wavelet_denoise, ThresholdRule, WaveletConfig};
