//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion ids (`C4 C7`) to run a subset.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nqr_core::baselines::{
    deconvolve_fit, ssa_decompose, wavelet_denoise, DcConfig, SsaConfig, ThresholdRule, WaveletConfig,
};
use nqr_core::ctn::CtnScale;
use nqr_core::cvnn::{run_suite, ArchMode};
use nqr_core::dataset::{
    build_dataset, decode_dataset, encode_dataset, ood_variant, read_dataset, write_dataset, DatasetConfig, OodKind,
    Split, SplitSizes,
};
use nqr_core::harness::{
    load_model, run_baseline, run_matrix, save_model, score, train_ensemble, BaselineMethod, BaselineSettings,
    EnsembleResult, ExperimentConfig, ModelSpec, DEFAULT_SEEDS,
};
use nqr_core::metrics::{rescaled_mse, scaled_r2};
use nqr_core::noise::{NoiseKind, SurrogateParams};
use nqr_core::signal::{sample_voigt_params, snr_stats, stream_rng, voigt_signal};
use nqr_core::train::predict_all;
use nqr_core::{ComplexSeries, SnrRegime, TimeGrid};

type Res<T> = std::result::Result<T, Box<dyn std::error::Error>>;

const MASTER_SEED: u64 = 0;
const CTN_SEEDS: [u64; 3] = [0, 1, 2];

struct Check {
    ok: bool,
    text: String,
}

fn check(ok: bool, text: impl Into<String>) -> Check {
    Check { ok, text: text.into() }
}

fn within_time(elapsed: Duration, limit: Duration, what: &str) -> Check {
    check(elapsed <= limit, format!("{what} {:.0} s <= {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

#[derive(Clone, Copy)]
enum Noise {
    White,
    Surrogate,
}

fn data_config(noise: Noise, f0: f64, regime: SnrRegime) -> DatasetConfig {
    let kind = match noise {
        Noise::White => NoiseKind::WhiteGaussian,
        Noise::Surrogate => NoiseKind::SurrogateColored(SurrogateParams::default()),
    };
    let mut cfg = DatasetConfig::new(kind, f0, regime, MASTER_SEED).with_sizes(SplitSizes::DESK);
    if matches!(noise, Noise::Surrogate) {
        cfg.swap_noise = NoiseKind::WhiteGaussian;
    }
    cfg
}

struct Trained {
    ensemble: EnsembleResult,
    elapsed: Duration,
}

#[derive(Default)]
struct Ctx {
    splits: HashMap<String, Split>,
    models: HashMap<String, Trained>,
}

fn key_of(cfg: &DatasetConfig) -> String {
    serde_json::to_string(cfg).expect("config serializes")
}

fn split_in<'a>(splits: &'a mut HashMap<String, Split>, cfg: &DatasetConfig) -> Res<&'a Split> {
    let key = key_of(cfg);
    if !splits.contains_key(&key) {
        splits.insert(key.clone(), build_dataset(cfg)?);
    }
    Ok(&splits[&key])
}

impl Ctx {
    fn split(&mut self, cfg: &DatasetConfig) -> Res<&Split> {
        split_in(&mut self.splits, cfg)
    }

    fn trained(&mut self, spec: &ModelSpec, cfg: &DatasetConfig, seeds: &[u64]) -> Res<&mut Trained> {
        let key = format!("{}|{}|{seeds:?}", serde_json::to_string(spec)?, key_of(cfg));
        if !self.models.contains_key(&key) {
            let split = split_in(&mut self.splits, cfg)?;
            let t = Instant::now();
            let ensemble = train_ensemble(spec, split, seeds)?;
            let elapsed = t.elapsed();
            if ensemble.is_partial() {
                return Err(format!("{} lost members: {:?}", spec.label(), ensemble.failures).into());
            }
            self.models.insert(key.clone(), Trained { ensemble, elapsed });
        }
        Ok(self.models.get_mut(&key).expect("inserted above"))
    }

    fn ctn(&mut self, window: usize, noise: Noise, regime: SnrRegime, seeds: &[u64]) -> Res<&mut Trained> {
        self.trained(&ModelSpec::ctn(ArchMode::ComplexNet, window, CtnScale::Desk), &data_config(noise, 0.0, regime), seeds)
    }

    fn ae_low(&mut self) -> Res<&mut Trained> {
        self.trained(&ModelSpec::ae(ArchMode::DualReal1C), &data_config(Noise::White, 0.0, SnrRegime::Low), &DEFAULT_SEEDS)
    }
}

fn baseline_r2(ctx: &mut Ctx, method: BaselineMethod, f0: f64, regime: SnrRegime) -> Res<(f64, Duration)> {
    let split = ctx.split(&data_config(Noise::White, f0, regime))?;
    let noisy: Vec<ComplexSeries> = split.test.iter().map(|e| e.noisy.clone()).collect();
    let t = Instant::now();
    let out = run_baseline(method, &noisy, &split.config.grid, f0, regime, &BaselineSettings::default())?;
    let elapsed = t.elapsed();
    Ok((score(&split.test, &out.predictions)?.0, elapsed))
}

fn c1_simulator(ctx: &mut Ctx) -> Res<Vec<Check>> {
    let t = Instant::now();
    let cfg = data_config(Noise::White, 0.0, SnrRegime::Low).with_sizes(SplitSizes { train: 2000, val: 1, test: 1 });
    let split = ctx.split(&cfg)?;
    let mut snr = Vec::with_capacity(2000);
    for e in &split.train {
        let noise = ComplexSeries::new(e.noisy.iter().zip(e.clean.iter()).map(|(a, b)| a - b).collect())?;
        snr.push(snr_stats(&e.clean, &noise)?.snr_db);
    }
    let elapsed = t.elapsed();
    let mean = snr.iter().sum::<f64>() / snr.len() as f64;
    let min = snr.iter().copied().fold(f64::INFINITY, f64::min);
    let max = snr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        check((mean - -17.7).abs() <= 3.0, format!("mean SNR {mean:.2} dB in -17.7 +- 3")),
        check((min - -35.6).abs() <= 3.0, format!("min {min:.2} dB in -35.6 +- 3")),
        check((max - -7.3).abs() <= 3.0, format!("max {max:.2} dB in -7.3 +- 3")),
        within_time(elapsed, Duration::from_secs(10), "runtime"),
    ])
}

fn oracle_r2(y: &[ComplexSeries], p: &[ComplexSeries]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        for k in 0..y[i].len() {
            let (a, b) = (y[i].as_slice()[k], p[i].as_slice()[k]);
            num += (a.re - b.re) * (a.re - b.re) + (a.im - b.im) * (a.im - b.im);
            den += a.re * a.re + a.im * a.im;
        }
    }
    100.0 * (1.0 - num / den)
}

fn oracle_mse(y: &[ComplexSeries], p: &[ComplexSeries], amp: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..y.len() {
        let mut s = 0.0;
        for k in 0..y[i].len() {
            let (a, b) = (y[i].as_slice()[k] / amp[i], p[i].as_slice()[k] / amp[i]);
            s += (a.re - b.re).powi(2) + (a.im - b.im).powi(2);
        }
        total += s / y[i].len() as f64;
    }
    total / y.len() as f64
}

fn c2_metrics(_: &mut Ctx) -> Res<Vec<Check>> {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (m, n) = (rng.random_range(1..6), rng.random_range(1..64));
        let mut draw = |scale: f64| -> Vec<ComplexSeries> {
            (0..m)
                .map(|_| {
                    let v = (0..n).map(|_| Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)));
                    ComplexSeries::new(v.collect()).unwrap()
                })
                .collect()
        };
        let y = draw(2.0);
        let p = draw(2.0);
        let amp: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..3.0)).collect();
        let dr = (scaled_r2(&y, &p)? - oracle_r2(&y, &p)).abs();
        let o = oracle_mse(&y, &p, &amp);
        let dm = (rescaled_mse(&y, &p, &amp)? - o).abs() / o.abs().max(1.0);
        worst = worst.max(dr).max(dm);
    }
    let y: Vec<ComplexSeries> = (0..3)
        .map(|i| ComplexSeries::new((0..50).map(|k| Complex64::new((k + i) as f64, 1.0 - k as f64)).collect()).unwrap())
        .collect();
    let zeros: Vec<ComplexSeries> = y.iter().map(|s| ComplexSeries::zeros(s.len())).collect();
    let (perfect, blank) = (scaled_r2(&y, &y)?, scaled_r2(&y, &zeros)?);
    Ok(vec![
        check(worst <= 1e-10, format!("oracle agreement {worst:.1e} <= 1e-10")),
        check(perfect == 100.0, format!("R2(Y,Y) = {perfect}")),
        check(blank == 0.0, format!("R2(Y,0) = {blank}")),
        within_time(t.elapsed(), Duration::from_secs(5), "runtime"),
    ])
}

fn c3_gradients(_: &mut Ctx) -> Res<Vec<Check>> {
    let t = Instant::now();
    let entries = run_suite(10, 0)?;
    let worst = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
    let fewest = entries.iter().map(|e| e.configs).min().unwrap_or(0);
    Ok(vec![
        check(worst <= 1e-4, format!("{} combinations, max rel error {worst:.2e} <= 1e-4", entries.len())),
        check(fewest >= 10, format!("{fewest} configurations each")),
        within_time(t.elapsed(), Duration::from_secs(120), "runtime"),
    ])
}

fn c4_dc(ctx: &mut Ctx) -> Res<Vec<Check>> {
    let grid = TimeGrid::default();
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let regime = if i % 2 == 0 { SnrRegime::High } else { SnrRegime::Low };
        let truth = sample_voigt_params(&mut stream_rng(41, 0, i), 0.0, regime);
        let fit = deconvolve_fit(&voigt_signal(&truth, &grid)?, &grid, &DcConfig::for_distribution(0.0, regime))?;
        let (a, b) = (fit.params.to_array(), truth.to_array());
        for k in [0, 1, 2, 4] {
            worst = worst.max(((a[k] - b[k]) / b[k]).abs());
        }
        worst = worst.max(((a[3] - b[3] + PI).rem_euclid(TAU) - PI).abs() / PI);
    }
    let (high, t_high) = baseline_r2(ctx, BaselineMethod::Dc, 0.0, SnrRegime::High)?;
    let (low, t_low) = baseline_r2(ctx, BaselineMethod::Dc, 0.0, SnrRegime::Low)?;
    let limit = Duration::from_secs(600);
    Ok(vec![
        check(worst <= 1e-6, format!("noiseless recovery {worst:.1e} <= 1e-6")),
        check(high >= 98.0, format!("high R2 {high:.2} >= 98")),
        check((45.0..=70.0).contains(&low), format!("low R2 {low:.2} in [45, 70]")),
        within_time(t_high.max(t_low), limit, "runtime per 500"),
    ])
}

fn c5_ssa(ctx: &mut Ctx) -> Res<Vec<Check>> {
    let z = Complex64::new(-0.004, 0.03).exp();
    let x = ComplexSeries::new((0..1024).map(|k| 1.5 * z.powi(k)).collect())?;
    let out = ssa_decompose(&x, &SsaConfig::default())?;
    let err = x.iter().zip(out.series.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let (high, t_high) = baseline_r2(ctx, BaselineMethod::Ssa, 0.0, SnrRegime::High)?;
    let (low, t_low) = baseline_r2(ctx, BaselineMethod::Ssa, 0.0, SnrRegime::Low)?;
    Ok(vec![
        check(out.rank == 1 && err <= 1e-8, format!("rank-1 exponential: rank {}, error {err:.1e} <= 1e-8", out.rank)),
        check(high >= 95.0, format!("high R2 {high:.2} >= 95")),
        check(low < 0.0, format!("low R2 {low:.2} < 0")),
        within_time(t_high.max(t_low), Duration::from_secs(600), "runtime per 500"),
    ])
}

fn c6_wavelet(ctx: &mut Ctx) -> Res<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = ComplexSeries::new((0..1024).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())?;
    let y = wavelet_denoise(&x, &WaveletConfig { rule: ThresholdRule::Fixed(0.0), ..WaveletConfig::default() })?;
    let err = x.iter().zip(y.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let (r0, t0) = baseline_r2(ctx, BaselineMethod::Wavelet, 0.0, SnrRegime::High)?;
    let (rf, tf) = baseline_r2(ctx, BaselineMethod::Wavelet, 1600.0, SnrRegime::High)?;
    Ok(vec![
        check(err <= 1e-10, format!("zero-threshold identity {err:.1e} <= 1e-10")),
        check(r0 >= 95.0, format!("high f0=0 R2 {r0:.2} >= 95")),
        check(r0 - rf >= 5.0, format!("R2(f0=0) - R2(f0=1600) = {r0:.2} - {rf:.2} >= 5")),
        within_time(t0 + tf, Duration::from_secs(300), "runtime"),
    ])
}

fn c7_ctn(ctx: &mut Ctx) -> Res<Vec<Check>> {
    let limit = Duration::from_secs(3600);
    let high = ctx.ctn(128, Noise::White, SnrRegime::High, &[0])?;
    let (r_high, t_high) = (high.ensemble.test.ensemble_r2, high.elapsed);
    let low = ctx.ctn(128, Noise::White, SnrRegime::Low, &CTN_SEEDS)?;
    let (r_low, t_low) = (low.ensemble.test.ensemble_r2, low.elapsed);
    let epochs = low.ensemble.members.iter().map(|m| m.history.val_loss.len()).max().unwrap_or(0);
    let r_ae = ctx.ae_low()?.ensemble.test.ensemble_r2;
    Ok(vec![
        check(r_high >= 95.0, format!("high R2 {r_high:.2} >= 95")),
        check(r_low >= 70.0, format!("low R2 {r_low:.2} >= 70")),
        check(r_low >= r_ae, format!("CTN {r_low:.2} >= AE {r_ae:.2} on low")),
        check(epochs <= 20, format!("{epochs} epochs <= 20")),
        within_time(t_high.max(t_low), limit, "runtime per cell"),
    ])
}

fn c8_ae(ctx: &mut Ctx) -> Res<Vec<Check>> {
    let limit = Duration::from_secs(1200);
    let low = ctx.ae_low()?;
    let (r_low, t_low) = (low.ensemble.test.ensemble_r2, low.elapsed);
    let cfg = data_config(Noise::White, 1600.0, SnrRegime::High);
    let mut mse = Vec::new();
    let mut slowest = t_low;
    for mode in [ArchMode::DualReal1C, ArchMode::DualReal2] {
        let t = ctx.trained(&ModelSpec::ae(mode), &cfg, &CTN_SEEDS)?;
        mse.push(t.ensemble.test.report.rescaled_mse_mean);
        slowest = slowest.max(t.elapsed);
    }
    Ok(vec![
        check(r_low >= 60.0, format!("DualReal1C low R2 {r_low:.2} >= 60")),
        check(
            mse[0] < mse[1],
            format!("high f0=1600 3-seed MSE DualReal1C {:.2}e-3 < DualReal2 {:.2}e-3", mse[0] * 1e3, mse[1] * 1e3),
        ),
        within_time(slowest, limit, "runtime per cell"),
    ])
}

fn c9_windows(ctx: &mut Ctx) -> Res<Vec<Check>> {
    let mut mse = Vec::new();
    let mut slowest = Duration::ZERO;
    for w in [128, 64, 32] {
        let t = ctx.ctn(w, Noise::White, SnrRegime::Low, &CTN_SEEDS)?;
        mse.push(t.ensemble.test.report.rescaled_mse_mean * 1e3);
        slowest = slowest.max(t.elapsed);
    }
    Ok(vec![
        check(mse[0] <= mse[2], format!("MSE W=128 {:.3}e-3 <= W=32 {:.3}e-3", mse[0], mse[2])),
        check(mse[0] <= mse[1], format!("MSE W=128 {:.3}e-3 <= W=64 {:.3}e-3", mse[0], mse[1])),
        within_time(slowest, Duration::from_secs(3600), "runtime per cell"),
    ])
}

fn c10_ood(ctx: &mut Ctx) -> Res<Vec<Check>> {
    let mut out = Vec::new();
    for (noise, name) in [(Noise::White, "white"), (Noise::Surrogate, "surrogate")] {
        let cfg = data_config(noise, 0.0, SnrRegime::Low);
        let swap = build_dataset(&ood_variant(&cfg, OodKind::NoiseSwap))?;
        let shift = build_dataset(&ood_variant(&cfg, OodKind::FreqShift))?;
        let t = ctx.ctn(128, noise, SnrRegime::Low, &CTN_SEEDS)?;
        let base = t.ensemble.test.report.rescaled_mse_mean;
        let s = t.ensemble.evaluate(&swap.test)?.report.rescaled_mse_mean / base;
        let f = t.ensemble.evaluate(&shift.test)?.report.rescaled_mse_mean / base;
        out.push(check((s - 1.0).abs() < 0.5, format!("{name}-trained noise swap MSE x{s:.2}, change < 50%")));
        out.push(check(f >= 2.0, format!("{name}-trained +300 Hz MSE x{f:.2} >= 2")));
    }
    Ok(out)
}

fn c11_determinism(ctx: &mut Ctx) -> Res<Vec<Check>> {
    let dir = tempfile::tempdir()?;
    let split = ctx.split(&data_config(Noise::White, 0.0, SnrRegime::Low))?.clone();
    let path = dir.path().join("data.nqr");
    write_dataset(&split, &path)?;
    let back = read_dataset(&path)?;
    let data_ok = back == split && encode_dataset(&back)? == std::fs::read(&path)? && decode_dataset(&encode_dataset(&split)?)? == split;

    let trained = ctx.ae_low()?;
    let member = &mut trained.ensemble.members[0];
    let spec = trained.ensemble.spec.clone();
    let ckpt = dir.path().join("model.nqr");
    save_model(&ckpt, &spec, member.seed, &member.history, &mut member.model)?;
    let (spec2, seed2, history2, mut model2) = load_model(&ckpt)?;
    let probe: Vec<ComplexSeries> = split.test.iter().take(8).map(|e| e.noisy.clone()).collect();
    let same_preds = predict_all(&mut member.model, &probe)? == predict_all(&mut model2, &probe)?;
    let ckpt2 = dir.path().join("model2.nqr");
    save_model(&ckpt2, &spec2, seed2, &history2, &mut model2)?;
    let model_ok = spec2 == spec
        && seed2 == member.seed
        && history2 == member.history
        && same_preds
        && std::fs::read(&ckpt)? == std::fs::read(&ckpt2)?;

    let reports: Vec<Vec<u8>> = (0..2)
        .map(|i| -> Res<Vec<u8>> {
            let out = dir.path().join(format!("run{i}"));
            let mut cfg = ExperimentConfig::preset(CtnScale::Desk, 3);
            cfg.datasets.truncate(1);
            for d in &mut cfg.datasets {
                d.sizes = SplitSizes { train: 24, val: 8, test: 8 };
            }
            cfg.models.retain(|m| matches!(m, ModelSpec::Ae { .. }));
            cfg.models.truncate(2);
            for m in &mut cfg.models {
                if let ModelSpec::Ae { train, .. } = m {
                    train.max_epochs = 3;
                }
            }
            cfg.seeds = vec![0, 1];
            cfg.output_dir = out.clone();
            run_matrix(&cfg)?;
            let mut bytes = std::fs::read(out.join("report.json"))?;
            bytes.extend(std::fs::read(out.join("metrics.csv"))?);
            Ok(bytes)
        })
        .collect::<Res<_>>()?;
    Ok(vec![
        check(data_ok, "dataset round trip bit-exact"),
        check(model_ok, "checkpoint round trip bit-exact"),
        check(reports[0] == reports[1], "identical runs give identical reports"),
    ])
}

type Criterion = fn(&mut Ctx) -> Res<Vec<Check>>;

fn main() -> ExitCode {
    let criteria: [(&str, &str, Criterion); 11] = [
        ("C1", "simulator calibration", c1_simulator),
        ("C2", "metric oracles", c2_metrics),
        ("C3", "gradient suite", c3_gradients),
        ("C4", "DC baseline", c4_dc),
        ("C5", "SSA baseline", c5_ssa),
        ("C6", "wavelet baseline", c6_wavelet),
        ("C7", "CV-CTN desk scale", c7_ctn),
        ("C8", "AE desk scale", c8_ae),
        ("C9", "window study", c9_windows),
        ("C10", "out of distribution", c10_ood),
        ("C11", "determinism and serialization", c11_determinism),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut ctx = Ctx::default();
    let (mut passed, mut ran) = (0, 0);
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w.eq_ignore_ascii_case(id)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let line = match catch_unwind(AssertUnwindSafe(|| run(&mut ctx))) {
            Ok(Ok(checks)) => {
                let ok = checks.iter().all(|c| c.ok);
                passed += ok as usize;
                let parts: Vec<String> =
                    checks.iter().map(|c| format!("{} [{}]", c.text, if c.ok { "ok" } else { "FAIL" })).collect();
                format!("{} {id} {name}: {}", if ok { "PASS" } else { "FAIL" }, parts.join("; "))
            }
            Ok(Err(e)) => format!("FAIL {id} {name}: error: {e}"),
            Err(_) => format!("FAIL {id} {name}: panicked"),
        };
        println!("{line} ({:.0} s)", t.elapsed().as_secs_f64());
    }
    println!("acceptance: {passed}/{ran} criteria passed");
    if passed == ran {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
