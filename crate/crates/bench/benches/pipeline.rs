use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nqr_core::ae::{build_ae, AeSpec};
use nqr_core::baselines::{deconvolve_fit, ssa_denoise, wavelet_denoise, DcConfig, SsaConfig, WaveletConfig};
use nqr_core::ctn::{build_ctn, CtnScale, CtnSpec};
use nqr_core::cvnn::ArchMode;
use nqr_core::dataset::{build_dataset, DatasetConfig, SplitSizes};
use nqr_core::noise::NoiseKind;
use nqr_core::signal::{sample_voigt_params, voigt_signal};
use nqr_core::train::{stack, Trainable};
use nqr_core::{SnrRegime, TimeGrid};

fn small_split() -> nqr_core::dataset::Split {
    let cfg = DatasetConfig::new(NoiseKind::WhiteGaussian, 0.0, SnrRegime::Low, 7)
        .with_sizes(SplitSizes { train: 32, val: 4, test: 4 });
    build_dataset(&cfg).expect("dataset")
}

fn synthesis(c: &mut Criterion) {
    let grid = TimeGrid::new(TimeGrid::DEFAULT_SAMPLES, TimeGrid::DEFAULT_DT).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("voigt_signal", |b| {
        b.iter(|| {
            let p = sample_voigt_params(&mut rng, 0.0, SnrRegime::High);
            voigt_signal(&p, &grid).unwrap()
        })
    });
    let cfg = DatasetConfig::new(NoiseKind::WhiteGaussian, 0.0, SnrRegime::Low, 3)
        .with_sizes(SplitSizes { train: 64, val: 16, test: 16 });
    c.bench_function("build_dataset_96", |b| b.iter(|| build_dataset(&cfg).unwrap()));
}

fn baselines(c: &mut Criterion) {
    let split = small_split();
    let x = &split.test[0].noisy;
    let grid = split.config.grid;
    let wcfg = WaveletConfig::default();
    c.bench_function("wavelet_denoise", |b| b.iter(|| wavelet_denoise(x, &wcfg).unwrap()));
    let scfg = SsaConfig::default();
    c.bench_function("ssa_denoise", |b| b.iter(|| ssa_denoise(x, &scfg).unwrap()));
    let dcfg = DcConfig::for_distribution(0.0, SnrRegime::Low);
    c.bench_function("deconvolve_fit", |b| b.iter(|| deconvolve_fit(x, &grid, &dcfg).unwrap()));
}

fn networks(c: &mut Criterion) {
    let split = small_split();
    let refs: Vec<_> = split.train.iter().map(|e| &e.noisy).collect();
    let batch = stack(&refs).unwrap();

    let mut ae = build_ae(&AeSpec::new(ArchMode::DualReal1C), 0).unwrap();
    c.bench_function("ae_forward_b32", |b| b.iter(|| ae.predict(&batch).unwrap()));
    c.bench_function("ae_step_b32", |b| {
        b.iter(|| {
            let y = ae.predict(&batch).unwrap();
            ae.backprop(&y).unwrap();
        })
    });

    let one = stack(&refs[..4]).unwrap();
    let mut ctn = build_ctn(&CtnSpec::new(ArchMode::ComplexNet, 128, CtnScale::Desk), 0).unwrap();
    let mut group = c.benchmark_group("ctn");
    group.sample_size(10);
    group.bench_function("forward_b4_w128", |b| b.iter(|| ctn.predict(&one).unwrap()));
    group.bench_function("step_b4_w128", |b| {
        b.iter(|| {
            let y = ctn.predict(&one).unwrap();
            ctn.backprop(&y).unwrap();
        })
    });
    group.finish();
}

criterion_group!(benches, synthesis, baselines, networks);
criterion_main!(benches);
