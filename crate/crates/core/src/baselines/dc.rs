//! Deconvolution baseline: bounded Levenberg–Marquardt fit of the signal
//! model to the noisy series.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix5, Vector5};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{voigt_signal, ComplexSeries, SnrRegime, TimeGrid, VoigtParams, DECAY_RANGE, FREQ_HALF_WIDTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcConfig {
    /// Initial values `[A, σ, T₂, φ, w]`; φ is replaced by each restart phase.
    pub init: [f64; 5],
    pub lower: [f64; 5],
    pub upper: [f64; 5],
    pub phase_restarts: Vec<f64>,
    pub max_iter: usize,
    pub step_tol: f64,
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    let pad = 0.1 * (hi - lo);
    (lo - pad, hi + pad)
}

impl DcConfig {
    /// Starts at the midpoints of the training distribution; bounds are its
    /// supports widened by 10 %.
    pub fn for_distribution(f0: f64, regime: SnrRegime) -> Self {
        let (a_lo, a_hi) = regime.amplitude_range();
        let decay_mid = 0.5 * (DECAY_RANGE.0 + DECAY_RANGE.1);
        let (al, ah) = widen(a_lo, a_hi);
        let (dl, dh) = widen(DECAY_RANGE.0, DECAY_RANGE.1);
        let (wl, wh) = widen(f0 - FREQ_HALF_WIDTH, f0 + FREQ_HALF_WIDTH);
        Self {
            init: [0.5 * (a_lo + a_hi), decay_mid, decay_mid, 0.0, f0],
            lower: [al.max(f64::MIN_POSITIVE), dl.max(1e-6), dl.max(1e-6), f64::NEG_INFINITY, wl],
            upper: [ah, dh, dh, f64::INFINITY, wh],
            phase_restarts: vec![-PI / 2.0, 0.0, PI / 2.0, PI],
            max_iter: 200,
            step_tol: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..5 {
            if !(self.lower[i] <= self.init[i] && self.init[i] <= self.upper[i]) && i != 3 {
                return Err(Error::invalid(format!("initial value {i} lies outside its bounds")));
            }
        }
        if self.phase_restarts.is_empty() || self.max_iter == 0 {
            return Err(Error::invalid("need at least one restart and one iteration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcFit {
    pub params: VoigtParams,
    pub fitted: ComplexSeries,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    /// Set when no restart met the step tolerance.
    pub warning: bool,
}

/// Residual (model − data) as complex samples and its squared norm.
fn residual(p: &[f64; 5], t: &[f64], y: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>, f64) {
    let mut model = Vec::with_capacity(t.len());
    let mut r = Vec::with_capacity(t.len());
    let mut cost = 0.0;
    for (&tk, &yk) in t.iter().zip(y) {
        let env = p[0] * (-tk * tk / (2.0 * p[1] * p[1]) - tk / p[2]).exp();
        let m = Complex64::from_polar(env, TAU * p[4] * tk + p[3]);
        let d = m - yk;
        cost += d.norm_sqr();
        model.push(m);
        r.push(d);
    }
    (model, r, cost)
}

fn clamp(p: &mut [f64; 5], cfg: &DcConfig) {
    for i in 0..5 {
        p[i] = p[i].clamp(cfg.lower[i], cfg.upper[i]);
    }
}

/// One bounded LM run. Returns (params, cost, converged).
fn lm(start: [f64; 5], t: &[f64], y: &[Complex64], cfg: &DcConfig) -> ([f64; 5], f64, bool) {
    let mut p = start;
    clamp(&mut p, cfg);
    let (mut model, mut r, mut cost) = residual(&p, t, y);
    // Damping is scaled by each parameter's box width (π for the free phase).
    let damp: [f64; 5] = std::array::from_fn(|a| {
        let w = cfg.upper[a] - cfg.lower[a];
        if w.is_finite() { 1.0 / (w * w) } else { 1.0 / (PI * PI) }
    });
    let mut lambda = 1e-3;
    for _ in 0..cfg.max_iter {
        // Jacobian columns of the model: ∂m/∂A, ∂m/∂σ, ∂m/∂T₂, ∂m/∂φ, ∂m/∂w.
        let mut jtj = Matrix5::<f64>::zeros();
        let mut jtr = Vector5::<f64>::zeros();
        for ((&tk, &m), &rk) in t.iter().zip(&model).zip(&r) {
            let i = Complex64::new(0.0, 1.0);
            let cols = [
                m / p[0],
                m * (tk * tk / (p[1] * p[1] * p[1])),
                m * (tk / (p[2] * p[2])),
                m * i,
                m * i * (TAU * tk),
            ];
            for a in 0..5 {
                jtr[a] += cols[a].re * rk.re + cols[a].im * rk.im;
                for b in a..5 {
                    jtj[(a, b)] += cols[a].re * cols[b].re + cols[a].im * cols[b].im;
                }
            }
        }
        for a in 0..5 {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut lhs = jtj;
            for a in 0..5 {
                lhs[(a, a)] += lambda * damp[a];
            }
            let Some(chol) = lhs.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-jtr));
            let mut cand = p;
            for a in 0..5 {
                cand[a] += delta[a];
            }
            clamp(&mut cand, cfg);
            let (m2, r2, c2) = residual(&cand, t, y);
            if c2.is_finite() && c2 < cost {
                let step = (0..5).map(|a| ((cand[a] - p[a]) / p[a].abs().max(1e-12)).abs()).fold(0.0, f64::max);
                p = cand;
                model = m2;
                r = r2;
                cost = c2;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if step < cfg.step_tol {
                    return (p, cost, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No descent direction left at any damping: a stationary point.
            return (p, cost, true);
        }
    }
    (p, cost, false)
}

pub fn deconvolve_fit(noisy: &ComplexSeries, grid: &TimeGrid, cfg: &DcConfig) -> Result<DcFit> {
    cfg.validate()?;
    noisy.check_len(grid.n_samples())?;
    let t: Vec<f64> = grid.times().collect();
    let y = noisy.as_slice();
    let (_, _, init_cost) = residual(&cfg.init, &t, y);
    let mut best: Option<([f64; 5], f64, bool)> = None;
    let mut any_converged = false;
    for &phase in &cfg.phase_restarts {
        let mut start = cfg.init;
        start[3] = phase;
        let (p, cost, ok) = lm(start, &t, y, cfg);
        any_converged |= ok;
        if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((p, cost, ok));
        }
    }
    let (mut p, cost, _) = best.expect("at least one restart");
    p[3] = (p[3] + PI).rem_euclid(TAU) - PI;
    let params = VoigtParams::from_array(p);
    let fitted = voigt_signal(&params, grid)?;
    Ok(DcFit {
        params,
        fitted,
        residual_norm: cost.sqrt(),
        initial_residual_norm: init_cost.sqrt(),
        warning: !any_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{sample_voigt_params, stream_rng};

    #[test]
    fn bounds_contain_init() {
        for regime in [SnrRegime::Low, SnrRegime::High] {
            let cfg = DcConfig::for_distribution(1600.0, regime);
            cfg.validate().unwrap();
            assert!(cfg.lower.iter().zip(&cfg.upper).all(|(l, u)| l < u));
            assert!(cfg.lower[1] > 0.0);
        }
    }

    #[test]
    fn noiseless_recovery() {
        let grid = TimeGrid::default();
        for i in 0..10 {
            let regime = if i % 2 == 0 { SnrRegime::High } else { SnrRegime::Low };
            let truth = sample_voigt_params(&mut stream_rng(3, 0, i), 0.0, regime);
            let y = voigt_signal(&truth, &grid).unwrap();
            let fit = deconvolve_fit(&y, &grid, &DcConfig::for_distribution(0.0, regime)).unwrap();
            let (a, b) = (fit.params.to_array(), truth.to_array());
            for k in [0, 1, 2, 4] {
                assert!(((a[k] - b[k]) / b[k]).abs() <= 1e-6, "param {k}: {} vs {}", a[k], b[k]);
            }
            let dphi = (a[3] - b[3] + PI).rem_euclid(TAU) - PI;
            assert!(dphi.abs() <= 1e-6 * PI);
            assert!(!fit.warning);
        }
    }

    #[test]
    fn residual_not_worse_than_init() {
        let grid = TimeGrid::default();
        let cfg = DcConfig::for_distribution(0.0, SnrRegime::Low);
        let mut rng = stream_rng(4, 0, 0);
        let noise = crate::noise::white_noise(&mut rng, grid.n_samples());
        let truth = sample_voigt_params(&mut rng, 0.0, SnrRegime::Low);
        let clean = voigt_signal(&truth, &grid).unwrap();
        let noisy = ComplexSeries::new(clean.iter().zip(noise.iter()).map(|(a, b)| a + b).collect()).unwrap();
        let fit = deconvolve_fit(&noisy, &grid, &cfg).unwrap();
        assert!(fit.residual_norm <= fit.initial_residual_norm);
        assert_eq!(fit, deconvolve_fit(&noisy, &grid, &cfg).unwrap());
    }

    #[test]
    fn rejects_length_mismatch() {
        let cfg = DcConfig::for_distribution(0.0, SnrRegime::Low);
        assert!(deconvolve_fit(&ComplexSeries::zeros(10), &TimeGrid::default(), &cfg).is_err());
    }
}
