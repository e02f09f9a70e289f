use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;

use nqr_core::cvnn::{run_suite, ActivationKind, LossKind};
use nqr_core::dataset::{build_dataset, ood_variant, read_dataset, read_series, write_dataset, write_series, DatasetConfig, Split};
use nqr_core::harness::{
    dc_params_csv, evaluate_members, load_config, load_model, obtain_dataset, preset_sizes, run_baseline, run_matrix,
    run_ood, score, BaselineSettings, ExperimentConfig, Member, ModelSpec,
};
use nqr_core::harness::experiment::plot_csv;
use nqr_core::ctn::CtnTrainConfig;
use nqr_core::metrics::{format_mean_sd_e3, MetricRow};
use nqr_core::noise::{NoiseKind, SurrogateParams};
use nqr_core::train::predict_all;
use nqr_core::{ComplexSeries, TimeGrid};

use crate::{
    ArchArg, BaselineArgs, ConfigArgs, DenoiseArgs, EvalArgs, GenArgs, GradcheckArgs, ModelArgs, NoiseArg, PresetArgs,
    SweepArgs, TrainArgs,
};

const PLOT_EXAMPLES: usize = 3;

fn load_split(path: &Path) -> Result<Split> {
    read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn print_row(row: &MetricRow) {
    println!("{}", MetricRow::CSV_HEADER);
    println!("{}", row.to_csv());
}

fn row_for(model: &str, arch: &str, window: &str, split: &Split, r2: f64, mean: f64, sd: f64, members: usize) -> MetricRow {
    let c = &split.config;
    MetricRow {
        model: model.into(),
        arch_mode: arch.into(),
        window: window.into(),
        noise: c.noise.label().into(),
        f0: c.f0,
        regime: c.regime.name().into(),
        seed_count: members,
        r2,
        mse_mean_e3: mean * 1e3,
        mse_sd_e3: sd * 1e3,
    }
}

pub fn gen(a: GenArgs) -> Result<ExitCode> {
    if let Some(path) = a.config {
        let cfg = load_config(&path)?;
        for d in &cfg.datasets {
            let mut all = vec![d.clone()];
            all.extend(cfg.ood.iter().map(|&k| ood_variant(d, k)));
            for v in all {
                let cached = obtain_dataset(&cfg.output_dir, &v)?;
                println!("{}\t{}\t{}", v.label(), cached.path.display(), cached.checksum);
            }
        }
        return Ok(ExitCode::SUCCESS);
    }
    let out = a.out.expect("clap requires --out without --config");
    let noise = match a.noise {
        NoiseArg::White => NoiseKind::WhiteGaussian,
        NoiseArg::Surrogate => NoiseKind::SurrogateColored(SurrogateParams::default()),
        NoiseArg::Bank => NoiseKind::MeasuredBank { path: a.bank.context("--noise bank needs --bank PATH")? },
    };
    let mut sizes = preset_sizes(a.scale);
    sizes.train = a.train.unwrap_or(sizes.train);
    sizes.val = a.val.unwrap_or(sizes.val);
    sizes.test = a.test.unwrap_or(sizes.test);
    let mut cfg = DatasetConfig::new(noise, a.f0, a.regime, a.seed).with_sizes(sizes);
    if !matches!(cfg.noise, NoiseKind::WhiteGaussian) {
        cfg.swap_noise = NoiseKind::WhiteGaussian;
    }
    let split = build_dataset(&cfg)?;
    write_dataset(&split, &out)?;
    println!("wrote {} ({}: {} train, {} val, {} test)", out.display(), cfg.label(), sizes.train, sizes.val, sizes.test);
    Ok(ExitCode::SUCCESS)
}

fn model_spec(m: &ModelArgs) -> Result<ModelSpec> {
    let mut spec = match m.arch {
        ArchArg::Ae => ModelSpec::ae(m.mode),
        ArchArg::Ctn => ModelSpec::ctn(m.mode, m.window, m.scale),
    };
    match &mut spec {
        ModelSpec::Ae { spec, train } => {
            if let Some(e) = m.epochs {
                train.max_epochs = e;
            }
            if let Some(act) = m.activation {
                spec.activation = act;
            }
            if let Some(loss) = m.loss {
                spec.loss = loss;
            }
        }
        ModelSpec::Ctn { train, .. } => {
            if m.activation.is_some() {
                bail!("--activation applies to the autoencoder only");
            }
            *train = CtnTrainConfig {
                max_epochs: m.epochs.unwrap_or(train.max_epochs),
                loss: m.loss.unwrap_or(train.loss),
                ..train.clone()
            };
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn train(a: TrainArgs) -> Result<ExitCode> {
    let split = load_split(&a.data)?;
    let spec = model_spec(&a.model)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut members = Vec::new();
    for &seed in &a.seeds {
        log::info!("training {} seed {seed}", spec.label());
        let (mut model, history) = spec.train(&split, seed)?;
        let path = a.out.join(format!("seed-{seed}.nqr"));
        nqr_core::harness::save_model(&path, &spec, seed, &history, &mut model)?;
        eprintln!(
            "seed {seed}: {} epochs, best {} (val {:.5}) -> {}",
            history.val_loss.len(),
            history.best_epoch,
            history.best_val_loss(),
            path.display()
        );
        members.push(Member { seed, model, history });
    }
    let eval = evaluate_members(&mut members, &split.test)?;
    let r = &eval.report;
    print_row(&row_for(spec.model_name(), spec.mode().name(), &spec.window_label(), &split, r.scaled_r2, r.rescaled_mse_mean, r.rescaled_mse_sd, members.len()));
    Ok(ExitCode::SUCCESS)
}

fn expand_checkpoints(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "nqr"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no checkpoints found");
    }
    Ok(out)
}

fn load_members(paths: &[PathBuf]) -> Result<(ModelSpec, Vec<Member>)> {
    let mut spec = None;
    let mut members = Vec::new();
    for p in expand_checkpoints(paths)? {
        let (s, seed, history, model) = load_model(&p).with_context(|| format!("loading {}", p.display()))?;
        match &spec {
            None => spec = Some(s),
            Some(first) if *first != s => bail!("{} holds a different model than the other checkpoints", p.display()),
            Some(_) => {}
        }
        members.push(Member { seed, model, history });
    }
    Ok((spec.expect("at least one checkpoint"), members))
}

pub fn eval(a: EvalArgs) -> Result<ExitCode> {
    let split = load_split(&a.data)?;
    let (spec, mut members) = load_members(&a.checkpoints)?;
    let eval = evaluate_members(&mut members, &split.test)?;
    if let Some(plot) = a.plot {
        let noisy: Vec<ComplexSeries> = split.test.iter().take(PLOT_EXAMPLES).map(|e| e.noisy.clone()).collect();
        let preds = nqr_core::harness::ensemble_predict(&mut members, &noisy)?;
        fs::write(&plot, plot_csv(&split.test, &preds, split.config.grid.dt(), PLOT_EXAMPLES))?;
    }
    for (m, (r2, mse)) in members.iter().zip(eval.member_r2.iter().zip(&eval.member_mse)) {
        eprintln!("seed {}: r2 {r2:.2}, mse {:.3}e-3", m.seed, mse * 1e3);
    }
    let r = &eval.report;
    print_row(&row_for(spec.model_name(), spec.mode().name(), &spec.window_label(), &split, r.scaled_r2, r.rescaled_mse_mean, r.rescaled_mse_sd, members.len()));
    Ok(ExitCode::SUCCESS)
}

pub fn baseline(a: BaselineArgs) -> Result<ExitCode> {
    let split = load_split(&a.data)?;
    let test = &split.test[..a.limit.unwrap_or(split.test.len()).min(split.test.len())];
    let noisy: Vec<ComplexSeries> = test.iter().map(|e| e.noisy.clone()).collect();
    let c = &split.config;
    let out = run_baseline(a.method, &noisy, &c.grid, c.f0, c.regime, &BaselineSettings::default())?;
    if let Some(path) = &a.params_csv {
        let fits = out.fits.as_ref().context("--params-csv is only available for the dc method")?;
        fs::write(path, dc_params_csv(fits)).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(plot) = &a.plot {
        fs::write(plot, plot_csv(test, &out.predictions, c.grid.dt(), PLOT_EXAMPLES))?;
    }
    let (r2, mse) = score(test, &out.predictions)?;
    print_row(&row_for(a.method.label(), "-", "-", &split, r2, mse, 0.0, 1));
    Ok(ExitCode::SUCCESS)
}

pub fn ood(a: ConfigArgs) -> Result<ExitCode> {
    let cfg = load_config(&a.config)?;
    let report = run_ood(&cfg)?;
    print!("{}", report.csv());
    let mut models: Vec<(String, String)> = Vec::new();
    for r in &report.rows {
        let key = (format!("{}/{}/{}", r.model, r.arch_mode, r.window), r.regime.clone());
        if !models.contains(&key) {
            models.push(key);
        }
    }
    for (m, regime) in &models {
        println!("\n{m} ({regime} SNR), noise layout, MSE x1e-3");
        print!("{}", report.noise_table(m, regime).to_csv());
        println!("{m} ({regime} SNR), frequency layout, MSE x1e-3");
        print!("{}", report.freq_table(m, regime).to_csv());
    }
    for f in &report.failures {
        eprintln!("failed: {f}");
    }
    println!("\nwritten to {}", cfg.output_dir.display());
    Ok(if report.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

pub fn report(a: ConfigArgs) -> Result<ExitCode> {
    let cfg = load_config(&a.config)?;
    let report = run_matrix(&cfg)?;
    print!("{}", report.metrics_csv());
    let failed: Vec<_> = report.cells.iter().filter(|c| c.error.is_some()).collect();
    for c in &failed {
        eprintln!("failed: {}/{} on {}: {}", c.model, c.arch_mode, c.dataset, c.error.as_deref().unwrap_or(""));
    }
    println!("\nwritten to {}", cfg.output_dir.display());
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

pub fn preset(a: PresetArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig::preset(a.scale, a.seed);
    println!("{}", serde_json::to_string_pretty(&cfg)?);
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let entries = run_suite(a.configs, a.seed)?;
    println!("activation,loss,configs,max_rel_error,status");
    let mut ok = true;
    for e in &entries {
        let pass = e.max_rel_error <= a.tol;
        ok &= pass;
        println!("{},{},{},{:.3e},{}", e.activation, e.loss, e.configs, e.max_rel_error, if pass { "ok" } else { "FAIL" });
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn read_input(path: &Path) -> Result<Vec<ComplexSeries>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.chars().any(|c| c.is_ascii_alphabetic())) {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(re), Some(im)) = (cols.next(), cols.next()) else {
                bail!("{}:{}: expected two columns re,im", path.display(), i + 1);
            };
            let parse = |s: &str| s.parse::<f64>().with_context(|| format!("{}:{}: bad number {s:?}", path.display(), i + 1));
            values.push(Complex64::new(parse(re)?, parse(im)?));
        }
        return Ok(vec![ComplexSeries::new(values)?]);
    }
    Ok(read_series(path)?.0)
}

pub fn denoise(a: DenoiseArgs) -> Result<ExitCode> {
    let input = read_input(&a.input)?;
    let output = match a.method {
        Some(method) => {
            let n = input.first().map_or(TimeGrid::DEFAULT_SAMPLES, ComplexSeries::len);
            let grid = TimeGrid::new(n, TimeGrid::DEFAULT_DT)?;
            run_baseline(method, &input, &grid, a.f0, a.regime, &BaselineSettings::default())?.predictions
        }
        None => {
            let (_, mut members) = load_members(&a.checkpoints)?;
            if members.len() == 1 {
                predict_all(&mut members[0].model, &input)?
            } else {
                nqr_core::harness::ensemble_predict(&mut members, &input)?
            }
        }
    };
    if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let mut text = String::from("series,index,re,im\n");
        for (s, series) in output.iter().enumerate() {
            for (k, z) in series.iter().enumerate() {
                text.push_str(&format!("{s},{k},{},{}\n", z.re, z.im));
            }
        }
        fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    } else {
        write_series(&a.out, &output, Some(TimeGrid::DEFAULT_DT))?;
    }
    eprintln!("denoised {} series -> {}", output.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let split = load_split(&a.data)?;
    println!("activation,loss,seed_count,r2,mse_mean_e3");
    for act in ActivationKind::ALL.iter().copied().filter(|k| k.compatible_with(a.mode)) {
        for loss in LossKind::ALL {
            let mut spec = ModelSpec::ae(a.mode);
            if let ModelSpec::Ae { spec: s, train } = &mut spec {
                s.activation = act;
                s.loss = loss;
                if let Some(e) = a.epochs {
                    train.max_epochs = e;
                }
            }
            let mut members = Vec::new();
            for &seed in &a.seeds {
                match spec.train(&split, seed) {
                    Ok((model, history)) => members.push(Member { seed, model, history }),
                    Err(e) => eprintln!("{act}/{loss} seed {seed}: {e}"),
                }
            }
            if members.is_empty() {
                println!("{act},{loss},0,,");
                continue;
            }
            let eval = evaluate_members(&mut members, &split.test)?;
            let r = &eval.report;
            println!("{act},{loss},{},{:.4},{}", members.len(), r.scaled_r2, format_mean_sd_e3(r.rescaled_mse_mean, r.rescaled_mse_sd));
        }
    }
    Ok(ExitCode::SUCCESS)
}
