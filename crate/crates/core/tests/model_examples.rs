//! Desk-scale training examples for the autoencoder and the window study.
//! Each trains real models for several minutes.

use nqr_core::ctn::CtnScale;
use nqr_core::cvnn::ArchMode;
use nqr_core::dataset::{build_dataset, DatasetConfig, SplitSizes};
use nqr_core::harness::{train_ensemble, ModelSpec};
use nqr_core::noise::NoiseKind;
use nqr_core::SnrRegime;

fn desk(regime: SnrRegime) -> nqr_core::dataset::Split {
    build_dataset(&DatasetConfig::new(NoiseKind::WhiteGaussian, 0.0, regime, 0).with_sizes(SplitSizes::DESK)).unwrap()
}

#[test]
fn ae_dualreal1c_high_snr() {
    let split = desk(SnrRegime::High);
    let e = train_ensemble(&ModelSpec::ae(ArchMode::DualReal1C), &split, &[0]).unwrap();
    let r2 = e.test.ensemble_r2;
    println!("AE DualReal1C high R2 {r2:.2}");
    assert!(r2 >= 93.0, "R2 {r2:.2} < 93");
}

#[test]
fn ctn_windows_close_at_high_snr() {
    let split = desk(SnrRegime::High);
    let mse: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&w| {
            let e = train_ensemble(&ModelSpec::ctn(ArchMode::ComplexNet, w, CtnScale::Desk), &split, &[0]).unwrap();
            e.test.report.rescaled_mse_mean
        })
        .collect();
    let (lo, hi) = mse.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    println!("high-SNR MSE by window 32/64/128: {:.4?} e-3", mse.iter().map(|m| m * 1e3).collect::<Vec<_>>());
    assert!(hi <= 1.2 * lo, "spread {:.1}% exceeds 20%", (hi / lo - 1.0) * 100.0);
}
