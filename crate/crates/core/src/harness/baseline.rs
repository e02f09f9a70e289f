//! Running the classical denoisers over a test set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{deconvolve_fit, ssa_denoise, wavelet_denoise, DcConfig, DcFit, SsaConfig, WaveletConfig};
use crate::error::{Error, Result};
use crate::signal::{ComplexSeries, SnrRegime, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Dc,
    Ssa,
    Wavelet,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 3] = [BaselineMethod::Dc, BaselineMethod::Ssa, BaselineMethod::Wavelet];

    /// Column label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            BaselineMethod::Dc => "DC",
            BaselineMethod::Ssa => "SSA",
            BaselineMethod::Wavelet => "W",
        }
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(BaselineMethod::Dc),
            "ssa" => Ok(BaselineMethod::Ssa),
            "wavelet" | "w" => Ok(BaselineMethod::Wavelet),
            _ => Err(Error::invalid(format!("unknown baseline '{s}' (expected dc, ssa or wavelet)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineSettings {
    #[serde(default)]
    pub ssa: SsaConfig,
    #[serde(default)]
    pub wavelet: WaveletConfig,
}

#[derive(Debug, Clone)]
pub struct BaselineOutput {
    pub predictions: Vec<ComplexSeries>,
    /// Per-example fits, for the deconvolution method only.
    pub fits: Option<Vec<DcFit>>,
}

/// Denoises every series; `f0` and `regime` describe the distribution the
/// deconvolution fit is initialized from.
pub fn run_baseline(
    method: BaselineMethod,
    noisy: &[ComplexSeries],
    grid: &TimeGrid,
    f0: f64,
    regime: SnrRegime,
    settings: &BaselineSettings,
) -> Result<BaselineOutput> {
    match method {
        BaselineMethod::Dc => {
            let cfg = DcConfig::for_distribution(f0, regime);
            let fits: Vec<DcFit> = noisy.par_iter().map(|y| deconvolve_fit(y, grid, &cfg)).collect::<Result<_>>()?;
            let warned = fits.iter().filter(|f| f.warning).count();
            if warned > 0 {
                log::warn!("{warned} of {} fits stopped before meeting the step tolerance", fits.len());
            }
            Ok(BaselineOutput { predictions: fits.iter().map(|f| f.fitted.clone()).collect(), fits: Some(fits) })
        }
        BaselineMethod::Ssa => Ok(BaselineOutput {
            predictions: noisy.par_iter().map(|y| ssa_denoise(y, &settings.ssa)).collect::<Result<_>>()?,
            fits: None,
        }),
        BaselineMethod::Wavelet => Ok(BaselineOutput {
            predictions: noisy.par_iter().map(|y| wavelet_denoise(y, &settings.wavelet)).collect::<Result<_>>()?,
            fits: None,
        }),
    }
}

pub const DC_PARAMS_HEADER: &str = "index,amplitude,sigma,t2,phase,freq,residual_norm,warning";

pub fn dc_params_csv(fits: &[DcFit]) -> String {
    let mut out = String::from(DC_PARAMS_HEADER);
    out.push('\n');
    for (i, f) in fits.iter().enumerate() {
        let p = &f.params;
        out.push_str(&format!(
            "{i},{},{},{},{},{},{},{}\n",
            p.amplitude, p.sigma, p.t2, p.phase, p.freq, f.residual_norm, f.warning
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{voigt_signal, VoigtParams};

    #[test]
    fn parses_method_names() {
        for m in BaselineMethod::ALL {
            let name = serde_json::to_value(m).unwrap();
            assert_eq!(name.as_str().unwrap().parse::<BaselineMethod>().unwrap(), m);
        }
        assert!("fft".parse::<BaselineMethod>().is_err());
    }

    #[test]
    fn dc_csv_has_one_row_per_fit() {
        let grid = TimeGrid::default();
        let p = VoigtParams { amplitude: 2.5, sigma: 4e-3, t2: 6e-3, phase: 0.3, freq: 40.0 };
        let y = voigt_signal(&p, &grid).unwrap();
        let out = run_baseline(BaselineMethod::Dc, &[y.clone(), y], &grid, 0.0, SnrRegime::High, &Default::default()).unwrap();
        let csv = dc_params_csv(out.fits.as_ref().unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], DC_PARAMS_HEADER);
        let amp: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert!((amp - 2.5).abs() < 1e-6);
    }
}
