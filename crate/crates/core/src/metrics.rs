//! Scoring: scaled R², amplitude-rescaled MSE, and ensemble statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSeries;

fn check_pairs(truths: &[ComplexSeries], preds: &[ComplexSeries]) -> Result<()> {
    if truths.len() != preds.len() {
        return Err(Error::shape(format!("{} truths but {} predictions", truths.len(), preds.len())));
    }
    for (i, (y, p)) in truths.iter().zip(preds).enumerate() {
        if y.len() != p.len() {
            return Err(Error::shape(format!("example {i}: truth has {} samples, prediction {}", y.len(), p.len())));
        }
    }
    Ok(())
}

/// Residual and signal energy summed over examples and samples.
fn energies<'a>(pairs: impl Iterator<Item = (&'a ComplexSeries, &'a ComplexSeries)>) -> (f64, f64) {
    pairs.fold((0.0, 0.0), |(res, sig), (y, p)| {
        let r: f64 = y.iter().zip(p).map(|(a, b)| (a - b).norm_sqr()).sum();
        let s: f64 = y.iter().map(|a| a.norm_sqr()).sum();
        (res + r, sig + s)
    })
}

/// `100·(1 − Σ|y − ŷ|² / Σ|y|²)` over all examples and samples.
///
/// 100 is a perfect prediction; 0 is the score of predicting no signal.
pub fn scaled_r2(truths: &[ComplexSeries], preds: &[ComplexSeries]) -> Result<f64> {
    check_pairs(truths, preds)?;
    let (res, sig) = energies(truths.iter().zip(preds));
    if sig == 0.0 {
        return Err(Error::invalid("scaled R² is undefined for all-zero truths"));
    }
    Ok(100.0 * (1.0 - res / sig))
}

/// Per-example mean of `|y/A − ŷ/A|²`, averaged over examples.
pub fn rescaled_mse(truths: &[ComplexSeries], preds: &[ComplexSeries], amplitudes: &[f64]) -> Result<f64> {
    let per = rescaled_mse_per_example(truths, preds, amplitudes)?;
    if per.is_empty() {
        return Err(Error::invalid("no examples to score"));
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

pub fn rescaled_mse_per_example(
    truths: &[ComplexSeries],
    preds: &[ComplexSeries],
    amplitudes: &[f64],
) -> Result<Vec<f64>> {
    check_pairs(truths, preds)?;
    if amplitudes.len() != truths.len() {
        return Err(Error::shape(format!("{} amplitudes for {} examples", amplitudes.len(), truths.len())));
    }
    truths
        .iter()
        .zip(preds)
        .zip(amplitudes)
        .map(|((y, p), &a)| {
            if !(a.is_finite() && a != 0.0) {
                return Err(Error::invalid(format!("rescaling needs a nonzero amplitude, got {a}")));
            }
            let inv = 1.0 / (a * a);
            let n = y.len().max(1) as f64;
            Ok(y.iter().zip(p).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>() * inv / n)
        })
        .collect()
}

/// Sample mean and sample SD (`n − 1` denominator) of member scores.
///
/// A single member has SD 0 by convention.
pub fn ensemble_stats(per_member: &[f64]) -> Result<(f64, f64)> {
    if per_member.is_empty() {
        return Err(Error::invalid("ensemble statistics need at least one member"));
    }
    let n = per_member.len() as f64;
    let mean = per_member.iter().sum::<f64>() / n;
    if per_member.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = per_member.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Formats an MSE mean and SD in units of 10⁻³ as `mean(sd)`.
pub fn format_mean_sd_e3(mean: f64, sd: f64) -> String {
    let (m, s) = (mean * 1e3, sd * 1e3);
    if m.abs() >= 10.0 {
        format!("{m:.1}({s:.2})")
    } else {
        format!("{m:.2}({s:.2})")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scaled_r2: f64,
    /// Stored unscaled; reports display ×10⁻³.
    pub rescaled_mse_mean: f64,
    pub rescaled_mse_sd: f64,
    pub n_examples: usize,
    pub n_members: usize,
}

/// One row of the CSV metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub arch_mode: String,
    pub window: String,
    pub noise: String,
    pub f0: f64,
    pub regime: String,
    pub seed_count: usize,
    pub r2: f64,
    pub mse_mean_e3: f64,
    pub mse_sd_e3: f64,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str =
        "model,arch_mode,window,noise,f0,regime,seed_count,r2,mse_mean_e3,mse_sd_e3";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.4},{:.4},{:.4}",
            self.model,
            self.arch_mode,
            self.window,
            self.noise,
            self.f0,
            self.regime,
            self.seed_count,
            self.r2,
            self.mse_mean_e3,
            self.mse_sd_e3
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn series(v: &[(f64, f64)]) -> ComplexSeries {
        ComplexSeries::new(v.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap()
    }

    #[test]
    fn r2_reference_points() {
        let y = vec![series(&[(1.0, 2.0), (-0.5, 0.25)]), series(&[(0.0, 1.0), (3.0, -1.0)])];
        assert_eq!(scaled_r2(&y, &y).unwrap(), 100.0);
        let zeros: Vec<_> = y.iter().map(|s| ComplexSeries::zeros(s.len())).collect();
        assert_eq!(scaled_r2(&y, &zeros).unwrap(), 0.0);
        let doubled: Vec<_> = y.iter().map(|s| s.scaled(Complex64::new(2.0, 0.0))).collect();
        assert!(scaled_r2(&y, &doubled).unwrap().abs() < 1e-12);
        assert!(scaled_r2(&zeros, &y).is_err());
        assert!(scaled_r2(&y[..1], &y).is_err());
    }

    #[test]
    fn rescaled_mse_reference_points() {
        let y = vec![series(&[(1.0, 0.0), (0.0, 1.0)])];
        assert_eq!(rescaled_mse(&y, &y, &[2.0]).unwrap(), 0.0);
        let zero = vec![ComplexSeries::zeros(2)];
        assert!((rescaled_mse(&y, &zero, &[2.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(rescaled_mse(&y, &zero, &[0.0]).is_err());
    }

    #[test]
    fn ensemble_stats_reference_points() {
        assert_eq!(ensemble_stats(&[0.3, 0.3, 0.3]).unwrap().1, 0.0);
        let (m, s) = ensemble_stats(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(ensemble_stats(&[5.0]).unwrap(), (5.0, 0.0));
        assert!(ensemble_stats(&[]).is_err());
    }

    #[test]
    fn table_formatting() {
        assert_eq!(format_mean_sd_e3(0.54e-3, 0.04e-3), "0.54(0.04)");
        assert_eq!(format_mean_sd_e3(17.9e-3, 0.23e-3), "17.9(0.23)");
    }
}
