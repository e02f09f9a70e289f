//! Multilevel sym4 DWT with half-sample symmetric boundaries and BayesShrink
//! soft thresholding.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSeries;

/// sym4 decomposition low-pass filter.
pub const SYM4_DEC_LO: [f64; 8] = [
    -0.07576571478950221,
    -0.029635527646002493,
    0.497618667632775,
    0.8037387518051321,
    0.29785779560530606,
    -0.09921954357663353,
    -0.012603967262031304,
    0.032223100604051466,
];

/// Quadrature mirror of [`SYM4_DEC_LO`].
pub const SYM4_DEC_HI: [f64; 8] = [
    -0.032223100604051466,
    -0.012603967262031304,
    0.09921954357663353,
    0.29785779560530606,
    -0.8037387518051321,
    0.497618667632775,
    0.029635527646002493,
    -0.07576571478950221,
];

/// Gaussian MAD scale, `Φ⁻¹(3/4)`.
const MAD_SCALE: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdRule {
    BayesShrink,
    /// Fixed threshold on every detail subband; 0 reconstructs exactly.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub levels: usize,
    pub rule: ThresholdRule,
    /// Denoise `|z|` only and keep the noisy phase.
    pub magnitude_only: bool,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self { levels: 12, rule: ThresholdRule::BayesShrink, magnitude_only: false }
    }
}

impl WaveletConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("wavelet levels must be positive"));
        }
        if let ThresholdRule::Fixed(t) = self.rule {
            if !(t >= 0.0) {
                return Err(Error::invalid(format!("threshold must be nonnegative, got {t}")));
            }
        }
        Ok(())
    }
}

fn rec_lo() -> [f64; 8] {
    let mut f = SYM4_DEC_LO;
    f.reverse();
    f
}

fn rec_hi() -> [f64; 8] {
    let mut f = SYM4_DEC_HI;
    f.reverse();
    f
}

/// Half-sample symmetric extension with period `2n`.
#[inline]
fn sym(x: &[f64], i: isize) -> f64 {
    let n = x.len() as isize;
    let m = i.rem_euclid(2 * n);
    x[if m < n { m } else { 2 * n - 1 - m } as usize]
}

/// One analysis step: filter and keep every second sample.
fn analyze(x: &[f64], f: &[f64]) -> Vec<f64> {
    let flen = f.len();
    let n_out = (x.len() + flen - 1) / 2;
    (0..n_out)
        .map(|o| f.iter().enumerate().map(|(j, fj)| fj * sym(x, (2 * o + 1) as isize - j as isize)).sum())
        .collect()
}

/// One synthesis step from approximation `a` and detail `d` of equal length.
fn synthesize(a: &[f64], d: &[f64]) -> Vec<f64> {
    let (lo, hi) = (rec_lo(), rec_hi());
    let half = lo.len() / 2;
    let n = a.len();
    let mut out = vec![0.0; 2 * n + 2 - lo.len()];
    for (o, i) in (half - 1..n).enumerate() {
        let (mut even, mut odd) = (0.0, 0.0);
        for j in 0..half {
            even += lo[2 * j] * a[i - j] + hi[2 * j] * d[i - j];
            odd += lo[2 * j + 1] * a[i - j] + hi[2 * j + 1] * d[i - j];
        }
        out[2 * o] = even;
        out[2 * o + 1] = odd;
    }
    out
}

/// Multilevel decomposition: `[approx, detail_coarsest, …, detail_finest]`.
pub fn wavedec(x: &[f64], levels: usize) -> Result<Vec<Vec<f64>>> {
    if x.is_empty() {
        return Err(Error::invalid("cannot decompose an empty signal"));
    }
    let mut details = Vec::with_capacity(levels);
    let mut a = x.to_vec();
    for _ in 0..levels {
        details.push(analyze(&a, &SYM4_DEC_HI));
        a = analyze(&a, &SYM4_DEC_LO);
    }
    let mut out = vec![a];
    out.extend(details.into_iter().rev());
    Ok(out)
}

/// Inverse of [`wavedec`]; `len` is the original length.
pub fn waverec(coeffs: &[Vec<f64>], len: usize) -> Result<Vec<f64>> {
    let (first, rest) = coeffs.split_first().ok_or_else(|| Error::invalid("no coefficients"))?;
    let mut a = first.clone();
    for d in rest {
        if a.len() == d.len() + 1 {
            a.pop();
        }
        if a.len() != d.len() || a.len() < SYM4_DEC_LO.len() / 2 {
            return Err(Error::shape(format!("incompatible coefficient lengths {} and {}", a.len(), d.len())));
        }
        a = synthesize(&a, d);
    }
    a.truncate(len);
    if a.len() != len {
        return Err(Error::shape("reconstruction shorter than the requested length"));
    }
    Ok(a)
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Denoises one real signal.
pub fn denoise_real(x: &[f64], cfg: &WaveletConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut coeffs = wavedec(x, cfg.levels)?;
    let thresholds: Vec<f64> = match cfg.rule {
        ThresholdRule::Fixed(t) => vec![t; coeffs.len() - 1],
        ThresholdRule::BayesShrink => {
            let finest = coeffs.last().expect("at least one level");
            let sigma = median(finest.iter().map(|v| v.abs()).collect()) / MAD_SCALE;
            coeffs[1..]
                .iter()
                .map(|d| {
                    let n = d.len() as f64;
                    let mean = d.iter().sum::<f64>() / n;
                    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let sx = (var - sigma * sigma).max(0.0).sqrt();
                    if sx > 0.0 {
                        sigma * sigma / sx
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        }
    };
    for (d, t) in coeffs[1..].iter_mut().zip(thresholds) {
        d.iter_mut().for_each(|v| *v = soft(*v, t));
    }
    waverec(&coeffs, x.len())
}

/// Denoises real and imaginary parts independently (or the modulus only).
pub fn wavelet_denoise(noisy: &ComplexSeries, cfg: &WaveletConfig) -> Result<ComplexSeries> {
    if cfg.magnitude_only {
        let mag: Vec<f64> = noisy.iter().map(|z| z.norm()).collect();
        let den = denoise_real(&mag, cfg)?;
        return ComplexSeries::new(
            noisy.iter().zip(den).map(|(z, m)| Complex64::from_polar(m.max(0.0), z.arg())).collect(),
        );
    }
    let re: Vec<f64> = noisy.iter().map(|z| z.re).collect();
    let im: Vec<f64> = noisy.iter().map(|z| z.im).collect();
    let (re, im) = (denoise_real(&re, cfg)?, denoise_real(&im, cfg)?);
    ComplexSeries::new(re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn probe64() -> Vec<f64> {
        (0..64).map(|k| {
            let k = k as f64;
            (0.05 * k).sin() * (-k / 30.0).exp() + 0.3 * (1.3 * k).cos()
        }).collect()
    }

    #[test]
    fn filters_are_orthonormal() {
        for k in 0..4 {
            let s: f64 = (0..8 - 2 * k).map(|n| SYM4_DEC_LO[n] * SYM4_DEC_LO[n + 2 * k]).sum();
            let want = if k == 0 { 1.0 } else { 0.0 };
            assert!((s - want).abs() < 1e-15, "shift {k}: {s}");
        }
        let dot: f64 = SYM4_DEC_LO.iter().zip(&SYM4_DEC_HI).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-15);
    }

    #[test]
    fn coefficient_lengths_for_1024() {
        let c = wavedec(&vec![1.0; 1024], 12).unwrap();
        let lens: Vec<usize> = c.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![7, 7, 7, 7, 8, 10, 14, 22, 38, 70, 134, 261, 515]);
    }

    #[test]
    fn matches_reference_coefficients() {
        // Values from an independent multilevel DWT (symmetric mode).
        let c = wavedec(&probe64(), 12).unwrap();
        let lens: Vec<usize> = c.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![7, 7, 7, 7, 7, 7, 7, 7, 8, 10, 14, 21, 35]);
        let finest = c.last().unwrap();
        for (got, want) in finest.iter().zip([0.12186094949122572, -0.06888844023912784, -0.03201407707566928]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((finest[34] + 0.07174650702003245).abs() < 1e-12);
        let approx = [9.845421107362005, 10.44243012803568, 6.213921900396513, 3.7443098661518217, 4.056665298564593, 3.716806131758427, 4.151022479236739];
        for (got, want) in c[0].iter().zip(approx) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn matches_reference_bayes_shrink() {
        let y: Vec<f64> = (0..1024)
            .map(|k| {
                let k = k as f64;
                (0.02 * k).cos() * (-k / 400.0).exp() + 0.5 * (2.1 * k + 0.3).sin() * (0.7 * k).cos()
            })
            .collect();
        let r = denoise_real(&y, &WaveletConfig::default()).unwrap();
        let want = [(0, 1.097459129239171), (1, 1.0966890970779488), (100, -0.2698092353671179), (511, -0.18320769269990347), (1023, -0.03338881878541767)];
        for (i, v) in want {
            assert!((r[i] - v).abs() < 1e-10, "{i}: {} vs {v}", r[i]);
        }
    }

    #[test]
    fn zero_threshold_is_identity() {
        let cfg = WaveletConfig { rule: ThresholdRule::Fixed(0.0), ..Default::default() };
        let x = ComplexSeries::new((0..1024).map(|k| Complex64::new((k as f64 * 0.3).sin(), (k as f64).sqrt())).collect()).unwrap();
        let y = wavelet_denoise(&x, &cfg).unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(WaveletConfig { levels: 0, ..Default::default() }.validate().is_err());
        assert!(WaveletConfig { rule: ThresholdRule::Fixed(-1.0), ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn analysis_synthesis_identity(xs in proptest::collection::vec(-100.0f64..100.0, 16..300), levels in 1usize..12) {
            let c = wavedec(&xs, levels).unwrap();
            let y = waverec(&c, xs.len()).unwrap();
            for (a, b) in xs.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
            }
        }
    }
}
