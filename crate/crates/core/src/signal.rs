//! Clean signal synthesis and SNR bookkeeping.
//!
//! A clean signal is a single decaying complex exponential with both a
//! Gaussian and an exponential envelope:
//!
//! ```text
//! y(t) = A · exp(−t²/(2σ²) − t/T₂) · exp(i(2π·w·t + φ))
//! ```
//!
//! sampled on a uniform grid starting at `t = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform sampling grid `t_k = k·dt`, `k = 0..n_samples`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_samples: usize,
    dt: f64,
}

impl TimeGrid {
    pub const DEFAULT_SAMPLES: usize = 1024;
    pub const DEFAULT_DT: f64 = 1.8e-5;

    pub fn new(n_samples: usize, dt: f64) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::invalid("time grid needs at least one sample"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("sample spacing must be positive, got {dt}")));
        }
        Ok(Self { n_samples, dt })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(move |k| self.t(k))
    }

    /// Sampling rate in Hz.
    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { n_samples: Self::DEFAULT_SAMPLES, dt: Self::DEFAULT_DT }
    }
}

/// A fixed-length complex time series: a clean signal, a noise draw, a noisy
/// observation, or a model prediction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexSeries {
    values: Vec<Complex64>,
}

impl ComplexSeries {
    /// Wraps `values`, rejecting non-finite samples.
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid(format!("non-finite sample at index {k}")));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub(crate) fn from_vec_unchecked(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.values.iter()
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.values
    }

    /// Mean of `|z|²` over the series.
    pub fn mean_power(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { values: self.values.iter().map(|z| z * c).collect() }
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(Error::shape(format!("series has {} samples, expected {n}", self.values.len())));
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for ComplexSeries {
    type Output = Complex64;

    fn index(&self, k: usize) -> &Complex64 {
        &self.values[k]
    }
}

impl<'a> IntoIterator for &'a ComplexSeries {
    type Item = &'a Complex64;
    type IntoIter = std::slice::Iter<'a, Complex64>;

    fn into_iter(self) -> Self::IntoIter {
        self.values.iter()
    }
}

/// The five generative parameters of one clean signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoigtParams {
    /// Initial amplitude `A`.
    pub amplitude: f64,
    /// Gaussian decay scale `σ` in seconds.
    pub sigma: f64,
    /// Exponential decay time `T₂` in seconds.
    pub t2: f64,
    /// Phase offset `φ` in radians.
    pub phase: f64,
    /// Frequency `w` in Hz.
    pub freq: f64,
}

impl VoigtParams {
    pub fn validate(&self) -> Result<()> {
        let all = self.to_array();
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite signal parameter in {self:?}")));
        }
        if self.amplitude <= 0.0 || self.sigma <= 0.0 || self.t2 <= 0.0 {
            return Err(Error::invalid(format!(
                "amplitude, sigma and T2 must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `[A, σ, T₂, φ, w]`, the on-disk ordering.
    pub fn to_array(&self) -> [f64; 5] {
        [self.amplitude, self.sigma, self.t2, self.phase, self.freq]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self { amplitude: a[0], sigma: a[1], t2: a[2], phase: a[3], freq: a[4] }
    }

    /// Decay envelope `A·exp(−t²/(2σ²) − t/T₂)`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.amplitude * (-t * t / (2.0 * self.sigma * self.sigma) - t / self.t2).exp()
    }
}

/// Amplitude regime controlling the SNR of generated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrRegime {
    Low,
    High,
}

impl SnrRegime {
    /// Support of the amplitude distribution.
    pub fn amplitude_range(self) -> (f64, f64) {
        match self {
            SnrRegime::Low => (0.1, 1.0),
            SnrRegime::High => (2.1, 3.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SnrRegime::Low => "low",
            SnrRegime::High => "high",
        }
    }
}

impl std::str::FromStr for SnrRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(SnrRegime::Low),
            "high" => Ok(SnrRegime::High),
            other => Err(Error::invalid(format!("unknown SNR regime {other:?}"))),
        }
    }
}

/// Support of the decay parameters σ and T₂.
pub const DECAY_RANGE: (f64, f64) = (1e-3, 1e-2);
/// Half-width of the frequency band around the center frequency.
pub const FREQ_HALF_WIDTH: f64 = 150.0;

/// Evaluates one clean sample directly.
pub fn voigt_value(params: &VoigtParams, t: f64) -> Complex64 {
    Complex64::from_polar(params.envelope(t), 2.0 * PI * params.freq * t + params.phase)
}

pub fn voigt_signal(params: &VoigtParams, grid: &TimeGrid) -> Result<ComplexSeries> {
    params.validate()?;
    let inv_two_sigma2 = 1.0 / (2.0 * params.sigma * params.sigma);
    let inv_t2 = 1.0 / params.t2;
    let omega = 2.0 * PI * params.freq;
    let values = grid
        .times()
        .map(|t| {
            let mag = params.amplitude * (-t * t * inv_two_sigma2 - t * inv_t2).exp();
            let (s, c) = (omega * t + params.phase).sin_cos();
            Complex64::new(mag * c, mag * s)
        })
        .collect();
    ComplexSeries::new(values)
}

/// Draws signal parameters for center frequency `f0` in the given regime.
pub fn sample_voigt_params<R: Rng + ?Sized>(rng: &mut R, f0: f64, regime: SnrRegime) -> VoigtParams {
    let (a_lo, a_hi) = regime.amplitude_range();
    let amplitude = rng.random_range(a_lo..a_hi);
    let sigma = rng.random_range(DECAY_RANGE.0..DECAY_RANGE.1);
    let t2 = rng.random_range(DECAY_RANGE.0..DECAY_RANGE.1);
    let phase = rng.random_range(-PI..PI);
    let freq = rng.random_range(f0 - FREQ_HALF_WIDTH..f0 + FREQ_HALF_WIDTH);
    VoigtParams { amplitude, sigma, t2, phase, freq }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrStats {
    pub p_signal: f64,
    pub p_noise: f64,
    pub snr_db: f64,
}

pub fn snr_stats(clean: &ComplexSeries, noise: &ComplexSeries) -> Result<SnrStats> {
    if clean.len() != noise.len() {
        return Err(Error::shape(format!(
            "clean has {} samples but noise has {}",
            clean.len(),
            noise.len()
        )));
    }
    let p_signal = clean.mean_power();
    let p_noise = noise.mean_power();
    if !(p_noise > 0.0) {
        return Err(Error::UndefinedSnr);
    }
    Ok(SnrStats { p_signal, p_noise, snr_db: 10.0 * (p_signal / p_noise).log10() })
}

/// Independent RNG stream for one `(stream, index)` pair under a master seed.
pub fn stream_rng(master_seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&stream.to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}
