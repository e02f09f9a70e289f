//! Experiment configuration, the evaluation matrix and the OOD study.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::baseline::{dc_params_csv, run_baseline, BaselineMethod, BaselineSettings};
use super::ensemble::{assemble, score, EnsembleEval, EnsembleResult, MemberFailure, DEFAULT_SEEDS};
use super::model::{load_model, save_model, ModelSpec};
use crate::container::{self, sha256_hex, ContainerKind};
use crate::ctn::{CtnScale, WINDOWS};
use crate::cvnn::ArchMode;
use crate::dataset::{
    decode_dataset, encode_dataset, ood_variant, build_dataset, DatasetConfig, LabeledExample, OodKind, Split, SplitSizes,
    HIGH_BAND_F0,
};
use crate::error::{Error, Result};
use crate::metrics::{ensemble_stats, format_mean_sd_e3, MetricReport, MetricRow};
use crate::noise::{NoiseKind, SurrogateParams};
use crate::signal::{ComplexSeries, SnrRegime};

/// Overrides [`ExperimentConfig::output_dir`] when set.
pub const OUTPUT_DIR_ENV: &str = "NQR_OUTPUT_DIR";

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("nqr-out")
}

fn default_scale() -> CtnScale {
    CtnScale::Desk
}

fn default_ood() -> Vec<OodKind> {
    vec![OodKind::NoiseSwap, OodKind::FreqShift]
}

fn default_plot_examples() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub baselines: Vec<BaselineMethod>,
    #[serde(default)]
    pub baseline_settings: BaselineSettings,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_scale")]
    pub scale: CtnScale,
    #[serde(default = "default_ood")]
    pub ood: Vec<OodKind>,
    /// Test examples written to each cell's plot-data file.
    #[serde(default = "default_plot_examples")]
    pub plot_examples: usize,
}

pub fn preset_sizes(scale: CtnScale) -> SplitSizes {
    match scale {
        CtnScale::Full => SplitSizes::FULL,
        CtnScale::Desk => SplitSizes::DESK,
    }
}

/// One CTN spec per encoder window.
pub fn window_sweep_specs(mode: ArchMode, scale: CtnScale) -> Vec<ModelSpec> {
    WINDOWS.iter().map(|&w| ModelSpec::ctn(mode, w, scale)).collect()
}

impl ExperimentConfig {
    /// White and surrogate noise at both center frequencies and both
    /// regimes; every AE mode, the CTN in every mode at W=128, all baselines.
    pub fn preset(scale: CtnScale, master_seed: u64) -> Self {
        let mut datasets = Vec::new();
        for noise in [NoiseKind::WhiteGaussian, NoiseKind::SurrogateColored(SurrogateParams::default())] {
            for f0 in [0.0, HIGH_BAND_F0] {
                for regime in [SnrRegime::High, SnrRegime::Low] {
                    let mut d = DatasetConfig::new(noise.clone(), f0, regime, master_seed).with_sizes(preset_sizes(scale));
                    if matches!(noise, NoiseKind::SurrogateColored(_)) {
                        d.swap_noise = NoiseKind::WhiteGaussian;
                    }
                    datasets.push(d);
                }
            }
        }
        let mut models: Vec<ModelSpec> = ArchMode::ALL.iter().map(|&m| ModelSpec::ae(m)).collect();
        models.extend(ArchMode::ALL.iter().map(|&m| ModelSpec::ctn(m, 128, scale)));
        Self {
            datasets,
            models,
            baselines: BaselineMethod::ALL.to_vec(),
            baseline_settings: BaselineSettings::default(),
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            scale,
            ood: default_ood(),
            plot_examples: default_plot_examples(),
        }
    }

    pub fn with_env_override(mut self) -> Self {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.datasets.is_empty() {
            return Err(Error::invalid("at least one dataset is required"));
        }
        for d in &self.datasets {
            d.validate()?;
            for kind in [&d.noise, &d.swap_noise] {
                if let NoiseKind::MeasuredBank { path } = kind {
                    if !path.exists() {
                        return Err(Error::invalid(format!("noise bank {} does not exist", path.display())));
                    }
                }
            }
        }
        for m in &self.models {
            m.validate()?;
        }
        Ok(())
    }
}

/// Reads a JSON config and applies the output-directory override.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)?;
    let cfg = cfg.with_env_override();
    cfg.validate()?;
    Ok(cfg)
}

fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn short_hash(parts: &[&serde_json::Value]) -> Result<String> {
    let mut text = String::new();
    for p in parts {
        text.push_str(&serde_json::to_string(p)?);
        text.push('\n');
    }
    Ok(sha256_hex(text.as_bytes())[..12].to_string())
}

fn mkdirs(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        mkdirs(parent)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

/// A dataset file under the output directory.
#[derive(Debug, Clone)]
pub struct CachedDataset {
    pub split: Split,
    pub path: PathBuf,
    pub checksum: String,
}

pub fn dataset_path(root: &Path, cfg: &DatasetConfig) -> Result<PathBuf> {
    let id = format!("{}-{}", slug(&cfg.label()), short_hash(&[&serde_json::to_value(cfg)?])?);
    Ok(root.join("datasets").join(format!("{id}.nqr")))
}

/// Loads the dataset for `cfg` from the cache, generating and writing it
/// when absent or stale.
pub fn obtain_dataset(root: &Path, cfg: &DatasetConfig) -> Result<CachedDataset> {
    let path = dataset_path(root, cfg)?;
    if path.exists() {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (header, _) = container::decode(&bytes, Some(ContainerKind::Dataset))?;
        let split = decode_dataset(&bytes)?;
        if split.config == *cfg {
            return Ok(CachedDataset { split, path, checksum: header.checksum });
        }
        log::info!("{} was written for another config; regenerating", path.display());
    }
    let split = build_dataset(cfg)?;
    let bytes = encode_dataset(&split)?;
    let (header, _) = container::decode(&bytes, Some(ContainerKind::Dataset))?;
    if let Some(parent) = path.parent() {
        mkdirs(parent)?;
    }
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    Ok(CachedDataset { split, path, checksum: header.checksum })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub seed: u64,
    pub path: String,
    pub sha256: String,
}

pub fn cell_dir(root: &Path, spec: &ModelSpec, data: &DatasetConfig) -> Result<PathBuf> {
    let name = format!("{}__{}", slug(&spec.label()), slug(&data.label()));
    let hash = short_hash(&[&serde_json::to_value(spec)?, &serde_json::to_value(data)?])?;
    Ok(root.join("checkpoints").join(format!("{name}-{hash}")))
}

/// Trains an ensemble, reusing member checkpoints found under `root`.
pub fn train_cached(
    root: &Path,
    spec: &ModelSpec,
    data: &CachedDataset,
    seeds: &[u64],
) -> Result<(EnsembleResult, Vec<CheckpointRef>)> {
    let dir = cell_dir(root, spec, &data.split.config)?;
    mkdirs(&dir)?;
    let member_path = |seed: u64| dir.join(format!("seed-{seed}.nqr"));
    let result = assemble(spec, &data.split, seeds, |seed| {
        let path = member_path(seed);
        if path.exists() {
            let (saved, saved_seed, history, model) = load_model(&path)?;
            if saved == *spec && saved_seed == seed {
                return Ok((model, history));
            }
        }
        let (mut model, history) = spec.train(&data.split, seed)?;
        save_model(&path, spec, seed, &history, &mut model)?;
        Ok((model, history))
    })?;
    let refs = result
        .seeds()
        .into_iter()
        .map(|seed| {
            let path = member_path(seed);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            Ok(CheckpointRef { seed, path: relative(root, &path), sha256: sha256_hex(&bytes) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((result, refs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Partial,
    Failed,
}

/// One (model, dataset) cell of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub model: String,
    pub arch_mode: String,
    pub window: String,
    pub dataset: String,
    pub dataset_file: String,
    pub dataset_checksum: String,
    pub status: CellStatus,
    pub error: Option<String>,
    pub row: Option<MetricRow>,
    pub eval: Option<EnsembleEval>,
    pub checkpoints: Vec<CheckpointRef>,
    pub failures: Vec<MemberFailure>,
    pub best_epochs: Vec<usize>,
    /// Representative denoised examples, relative to the output directory.
    pub plot_file: Option<String>,
    /// Per-example fitted parameters (deconvolution only).
    pub params_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub scale: CtnScale,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellReport>,
}

impl MatrixReport {
    pub fn rows(&self) -> Vec<&MetricRow> {
        self.cells.iter().filter_map(|c| c.row.as_ref()).collect()
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{}\n", MetricRow::CSV_HEADER);
        for r in self.rows() {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    /// R² pivot: one line per model, one column per dataset.
    pub fn r2_table_csv(&self) -> String {
        let mut datasets: Vec<&str> = Vec::new();
        let mut models: Vec<(String, String, String)> = Vec::new();
        for c in &self.cells {
            if !datasets.contains(&c.dataset.as_str()) {
                datasets.push(&c.dataset);
            }
            let key = (c.model.clone(), c.arch_mode.clone(), c.window.clone());
            if !models.contains(&key) {
                models.push(key);
            }
        }
        let mut out = String::from("model,arch_mode,window");
        for d in &datasets {
            out.push(',');
            out.push_str(d);
        }
        out.push('\n');
        for (m, a, w) in &models {
            out.push_str(&format!("{m},{a},{w}"));
            for d in &datasets {
                let cell = self.cells.iter().find(|c| &c.model == m && &c.arch_mode == a && &c.window == w && c.dataset == *d);
                out.push(',');
                if let Some(r) = cell.and_then(|c| c.row.as_ref()) {
                    out.push_str(&format!("{:.1}", r.r2));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn metric_row(model: &str, arch: &str, window: &str, data: &DatasetConfig, report: &MetricReport) -> MetricRow {
    MetricRow {
        model: model.into(),
        arch_mode: arch.into(),
        window: window.into(),
        noise: data.noise.label().into(),
        f0: data.f0,
        regime: data.regime.name().into(),
        seed_count: report.n_members,
        r2: report.scaled_r2,
        mse_mean_e3: report.rescaled_mse_mean * 1e3,
        mse_sd_e3: report.rescaled_mse_sd * 1e3,
    }
}

pub const PLOT_HEADER: &str = "example,t,noisy_re,noisy_im,clean_re,clean_im,pred_re,pred_im";

pub fn plot_csv(test: &[LabeledExample], preds: &[ComplexSeries], dt: f64, count: usize) -> String {
    let mut out = format!("{PLOT_HEADER}\n");
    for (i, (ex, p)) in test.iter().zip(preds).take(count).enumerate() {
        for (k, ((y, c), q)) in ex.noisy.iter().zip(ex.clean.iter()).zip(p.iter()).enumerate() {
            out.push_str(&format!("{i},{},{},{},{},{},{},{}\n", k as f64 * dt, y.re, y.im, c.re, c.im, q.re, q.im));
        }
    }
    out
}

fn failed_cell(model: &str, arch: &str, window: &str, data: &DatasetConfig, file: String, checksum: String, err: &Error) -> CellReport {
    log::warn!("{model}/{arch} on {}: {err}", data.label());
    CellReport {
        model: model.into(),
        arch_mode: arch.into(),
        window: window.into(),
        dataset: data.label(),
        dataset_file: file,
        dataset_checksum: checksum,
        status: CellStatus::Failed,
        error: Some(err.to_string()),
        row: None,
        eval: None,
        checkpoints: Vec::new(),
        failures: Vec::new(),
        best_epochs: Vec::new(),
        plot_file: None,
        params_file: None,
    }
}

fn model_cell(root: &Path, cfg: &ExperimentConfig, spec: &ModelSpec, data: &CachedDataset) -> Result<CellReport> {
    let (mut ens, checkpoints) = train_cached(root, spec, data, &cfg.seeds)?;
    let dc = &data.split.config;
    let plot = cell_dir(root, spec, dc)?.join("plot.csv");
    let noisy: Vec<ComplexSeries> = data.split.test.iter().take(cfg.plot_examples).map(|e| e.noisy.clone()).collect();
    let preds = ens.predict(&noisy)?;
    write_text(&plot, &plot_csv(&data.split.test, &preds, dc.grid.dt(), cfg.plot_examples))?;
    let eval = ens.test.clone();
    Ok(CellReport {
        model: spec.model_name().into(),
        arch_mode: spec.mode().name().into(),
        window: spec.window_label(),
        dataset: dc.label(),
        dataset_file: relative(root, &data.path),
        dataset_checksum: data.checksum.clone(),
        status: if ens.is_partial() { CellStatus::Partial } else { CellStatus::Ok },
        error: None,
        row: Some(metric_row(spec.model_name(), spec.mode().name(), &spec.window_label(), dc, &eval.report)),
        eval: Some(eval),
        checkpoints,
        failures: ens.failures.clone(),
        best_epochs: ens.members.iter().map(|m| m.history.best_epoch).collect(),
        plot_file: Some(relative(root, &plot)),
        params_file: None,
    })
}

fn baseline_cell(root: &Path, cfg: &ExperimentConfig, method: BaselineMethod, data: &CachedDataset) -> Result<CellReport> {
    let dc = &data.split.config;
    let noisy: Vec<ComplexSeries> = data.split.test.iter().map(|e| e.noisy.clone()).collect();
    let out = run_baseline(method, &noisy, &dc.grid, dc.f0, dc.regime, &cfg.baseline_settings)?;
    let (r2, mse) = score(&data.split.test, &out.predictions)?;
    let (mean, sd) = ensemble_stats(&[mse])?;
    let report = MetricReport {
        scaled_r2: r2,
        rescaled_mse_mean: mean,
        rescaled_mse_sd: sd,
        n_examples: noisy.len(),
        n_members: 1,
    };
    let eval = EnsembleEval { member_r2: vec![r2], member_mse: vec![mse], ensemble_r2: r2, ensemble_mse: mse, report };
    let dir = root.join("baselines").join(format!("{}__{}", method.label(), slug(&dc.label())));
    let plot = dir.join("plot.csv");
    write_text(&plot, &plot_csv(&data.split.test, &out.predictions, dc.grid.dt(), cfg.plot_examples))?;
    let params_file = match &out.fits {
        Some(fits) => {
            let p = dir.join("dc_params.csv");
            write_text(&p, &dc_params_csv(fits))?;
            Some(relative(root, &p))
        }
        None => None,
    };
    Ok(CellReport {
        model: method.label().into(),
        arch_mode: "-".into(),
        window: "-".into(),
        dataset: dc.label(),
        dataset_file: relative(root, &data.path),
        dataset_checksum: data.checksum.clone(),
        status: CellStatus::Ok,
        error: None,
        row: Some(metric_row(method.label(), "-", "-", dc, &eval.report)),
        eval: Some(eval),
        checkpoints: Vec::new(),
        failures: Vec::new(),
        best_epochs: Vec::new(),
        plot_file: Some(relative(root, &plot)),
        params_file,
    })
}

/// Trains and scores every (model, dataset) and (baseline, dataset) cell and
/// writes `metrics.csv`, `r2_table.csv` and `report.json` to the output
/// directory. Failing cells are recorded and the run continues.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<MatrixReport> {
    cfg.validate()?;
    let root = cfg.output_dir.as_path();
    mkdirs(root)?;
    let mut cells = Vec::new();
    for dcfg in &cfg.datasets {
        let data = match obtain_dataset(root, dcfg) {
            Ok(d) => d,
            Err(e) => {
                for m in &cfg.models {
                    cells.push(failed_cell(m.model_name(), m.mode().name(), &m.window_label(), dcfg, String::new(), String::new(), &e));
                }
                for b in &cfg.baselines {
                    cells.push(failed_cell(b.label(), "-", "-", dcfg, String::new(), String::new(), &e));
                }
                continue;
            }
        };
        for spec in &cfg.models {
            log::info!("cell {} on {}", spec.label(), dcfg.label());
            cells.push(model_cell(root, cfg, spec, &data).unwrap_or_else(|e| {
                failed_cell(spec.model_name(), spec.mode().name(), &spec.window_label(), dcfg, relative(root, &data.path), data.checksum.clone(), &e)
            }));
        }
        for &method in &cfg.baselines {
            log::info!("baseline {} on {}", method.label(), dcfg.label());
            cells.push(baseline_cell(root, cfg, method, &data).unwrap_or_else(|e| {
                failed_cell(method.label(), "-", "-", dcfg, relative(root, &data.path), data.checksum.clone(), &e)
            }));
        }
    }
    let report = MatrixReport { scale: cfg.scale, seeds: cfg.seeds.clone(), cells };
    write_text(&root.join("metrics.csv"), &report.metrics_csv())?;
    write_text(&root.join("r2_table.csv"), &report.r2_table_csv())?;
    write_text(&root.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(report)
}

/// One ensemble scored on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub model: String,
    pub arch_mode: String,
    pub window: String,
    pub regime: String,
    /// `None` for the in-distribution test set.
    pub kind: Option<OodKind>,
    pub train_noise: String,
    pub test_noise: String,
    pub train_f0: f64,
    pub test_f0: f64,
    pub train_dataset_checksum: String,
    pub test_dataset_checksum: String,
    pub r2: f64,
    pub mse_mean: f64,
    pub mse_sd: f64,
    /// Mean member MSE relative to the in-distribution value.
    pub mse_ratio: f64,
}

impl OodRow {
    pub const CSV_HEADER: &'static str =
        "model,arch_mode,window,regime,kind,train_noise,test_noise,train_f0,test_f0,r2,mse_mean_e3,mse_sd_e3,mse_ratio";

    pub fn kind_label(&self) -> &'static str {
        match self.kind {
            None => "in",
            Some(OodKind::NoiseSwap) => "noise_swap",
            Some(OodKind::FreqShift) => "freq_shift",
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
            self.model,
            self.arch_mode,
            self.window,
            self.regime,
            self.kind_label(),
            self.train_noise,
            self.test_noise,
            self.train_f0,
            self.test_f0,
            self.r2,
            self.mse_mean * 1e3,
            self.mse_sd * 1e3,
            self.mse_ratio
        )
    }
}

/// Train-by-test grid of `mean(sd)` MSE cells in units of 10⁻³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<Option<String>>>,
}

impl LayoutTable {
    pub fn from_entries(entries: &[(String, String, String)]) -> Self {
        let mut row_labels: Vec<String> = Vec::new();
        let mut col_labels: Vec<String> = Vec::new();
        for (r, c, _) in entries {
            if !row_labels.contains(r) {
                row_labels.push(r.clone());
            }
            if !col_labels.contains(c) {
                col_labels.push(c.clone());
            }
        }
        row_labels.sort();
        col_labels.sort();
        let cells = row_labels
            .iter()
            .map(|r| {
                col_labels
                    .iter()
                    .map(|c| entries.iter().find(|(er, ec, _)| er == r && ec == c).map(|e| e.2.clone()))
                    .collect()
            })
            .collect();
        Self { row_labels, col_labels, cells }
    }

    pub fn transpose(&self) -> Self {
        Self {
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            cells: (0..self.col_labels.len()).map(|j| self.cells.iter().map(|row| row[j].clone()).collect()).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("train\\test");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (r, row) in self.row_labels.iter().zip(&self.cells) {
            out.push_str(r);
            for v in row {
                out.push(',');
                out.push_str(v.as_deref().unwrap_or(""));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<OodRow>,
    pub failures: Vec<String>,
}

impl OodReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", OodRow::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    fn table(&self, model: &str, regime: &str, pick: impl Fn(&OodRow) -> Option<(String, String)>) -> LayoutTable {
        let entries: Vec<(String, String, String)> = self
            .rows
            .iter()
            .filter(|r| format!("{}/{}/{}", r.model, r.arch_mode, r.window) == model && r.regime == regime)
            .filter_map(|r| pick(r).map(|(a, b)| (a, b, format_mean_sd_e3(r.mse_mean, r.mse_sd))))
            .collect();
        LayoutTable::from_entries(&entries)
    }

    /// Noise layout (`white→white`, `white→surrogate`, …) for one model,
    /// keyed `model/arch_mode/window`.
    pub fn noise_table(&self, model: &str, regime: &str) -> LayoutTable {
        self.table(model, regime, |r| {
            (r.kind != Some(OodKind::FreqShift)).then(|| (r.train_noise.clone(), r.test_noise.clone()))
        })
    }

    /// Center-frequency layout for one model.
    pub fn freq_table(&self, model: &str, regime: &str) -> LayoutTable {
        self.table(model, regime, |r| {
            (r.kind != Some(OodKind::NoiseSwap)).then(|| (format!("{} Hz", r.train_f0), format!("{} Hz", r.test_f0)))
        })
    }
}

fn ood_row(spec: &ModelSpec, train: &CachedDataset, test: &CachedDataset, kind: Option<OodKind>, eval: &EnsembleEval, in_mse: f64) -> OodRow {
    let (tc, sc) = (&train.split.config, &test.split.config);
    OodRow {
        model: spec.model_name().into(),
        arch_mode: spec.mode().name().into(),
        window: spec.window_label(),
        regime: tc.regime.name().into(),
        kind,
        train_noise: tc.noise.label().into(),
        test_noise: sc.noise.label().into(),
        train_f0: tc.f0,
        test_f0: sc.f0,
        train_dataset_checksum: train.checksum.clone(),
        test_dataset_checksum: test.checksum.clone(),
        r2: eval.report.scaled_r2,
        mse_mean: eval.report.rescaled_mse_mean,
        mse_sd: eval.report.rescaled_mse_sd,
        mse_ratio: eval.report.rescaled_mse_mean / in_mse,
    }
}

/// Scores every ensemble on its own test set and on each configured OOD
/// variant; writes `ood.csv` and `ood.json`.
pub fn run_ood(cfg: &ExperimentConfig) -> Result<OodReport> {
    cfg.validate()?;
    if cfg.models.is_empty() {
        return Err(Error::invalid("the OOD study needs at least one model"));
    }
    let root = cfg.output_dir.as_path();
    mkdirs(root)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for dcfg in &cfg.datasets {
        let data = match obtain_dataset(root, dcfg) {
            Ok(d) => d,
            Err(e) => {
                failures.push(format!("{}: {e}", dcfg.label()));
                continue;
            }
        };
        let variants: Vec<(OodKind, CachedDataset)> = cfg
            .ood
            .iter()
            .filter_map(|&k| match obtain_dataset(root, &ood_variant(dcfg, k)) {
                Ok(d) => Some((k, d)),
                Err(e) => {
                    failures.push(format!("{} {k:?}: {e}", dcfg.label()));
                    None
                }
            })
            .collect();
        for spec in &cfg.models {
            let outcome = (|| -> Result<Vec<OodRow>> {
                let (mut ens, _) = train_cached(root, spec, &data, &cfg.seeds)?;
                let base = ens.test.clone();
                let in_mse = base.report.rescaled_mse_mean;
                let mut out = vec![ood_row(spec, &data, &data, None, &base, in_mse)];
                for (kind, v) in &variants {
                    let eval = ens.evaluate(&v.split.test)?;
                    out.push(ood_row(spec, &data, v, Some(*kind), &eval, in_mse));
                }
                Ok(out)
            })();
            match outcome {
                Ok(r) => rows.extend(r),
                Err(e) => failures.push(format!("{} on {}: {e}", spec.label(), dcfg.label())),
            }
        }
    }
    let report = OodReport { seeds: cfg.seeds.clone(), rows, failures };
    write_text(&root.join("ood.csv"), &report.csv())?;
    write_text(&root.join("ood.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(report)
}

/// Reads a saved matrix report.
pub fn read_matrix_report(path: &Path) -> Result<MatrixReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ae::{AeSpec, AeTrainConfig};

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        let sizes = SplitSizes { train: 16, val: 6, test: 6 };
        let d = DatasetConfig::new(NoiseKind::WhiteGaussian, 0.0, SnrRegime::High, 11).with_sizes(sizes);
        let ae = |mode| ModelSpec::Ae { spec: AeSpec::new(mode), train: AeTrainConfig { max_epochs: 3, ..AeTrainConfig::default() } };
        ExperimentConfig {
            datasets: vec![d],
            models: vec![ae(ArchMode::ComplexNet), ae(ArchMode::DualReal1C)],
            baselines: vec![BaselineMethod::Wavelet],
            baseline_settings: BaselineSettings::default(),
            seeds: vec![0, 1],
            output_dir: dir.to_path_buf(),
            scale: CtnScale::Desk,
            ood: default_ood(),
            plot_examples: 2,
        }
    }

    #[test]
    fn config_json_defaults() {
        let d = DatasetConfig::new(NoiseKind::WhiteGaussian, 0.0, SnrRegime::Low, 1);
        let text = format!("{{\"datasets\": [{}]}}", serde_json::to_string(&d).unwrap());
        let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.scale, CtnScale::Desk);
        assert!(cfg.models.is_empty());
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        assert!(cfg.validate().is_ok());
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config(dir.path());
        cfg.datasets[0].noise = NoiseKind::MeasuredBank { path: dir.path().join("missing.nqr") };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn preset_covers_the_matrix() {
        let cfg = ExperimentConfig::preset(CtnScale::Desk, 0);
        assert_eq!(cfg.datasets.len(), 8);
        assert_eq!(cfg.models.len(), 8);
        assert!(cfg.datasets.iter().all(|d| d.sizes == SplitSizes::DESK));
        assert_eq!(window_sweep_specs(ArchMode::ComplexNet, CtnScale::Desk).len(), 3);
    }

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(slug("CTN/ComplexNet/W128"), "CTN_ComplexNet_W128");
        assert_eq!(slug("white/f0=1600/low"), "white_f0_1600_low");
    }

    #[test]
    fn matrix_cells_and_cached_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let first = run_matrix(&cfg).unwrap();
        assert_eq!(first.cells.len(), 3);
        assert!(first.cells.iter().all(|c| c.status == CellStatus::Ok));
        assert_eq!(first.cells[0].checkpoints.len(), 2);
        assert_eq!(first.rows()[0].seed_count, 2);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with(MetricRow::CSV_HEADER));
        let json = fs::read(dir.path().join("report.json")).unwrap();
        let plot = dir.path().join(first.cells[0].plot_file.as_ref().unwrap());
        assert_eq!(fs::read_to_string(plot).unwrap().lines().count(), 1 + 2 * 1024);
        let second = run_matrix(&cfg).unwrap();
        assert_eq!(first, second);
        assert_eq!(json, fs::read(dir.path().join("report.json")).unwrap());
        assert_eq!(read_matrix_report(&dir.path().join("report.json")).unwrap(), first);
    }

    #[test]
    fn failing_cell_does_not_stop_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.baselines.clear();
        if let ModelSpec::Ae { train, .. } = &mut cfg.models[0] {
            train.lr = -1.0;
        }
        let report = run_matrix(&cfg).unwrap();
        assert_eq!(report.cells[0].status, CellStatus::Failed);
        assert!(report.cells[0].error.is_some());
        assert_eq!(report.cells[1].status, CellStatus::Ok);
    }

    #[test]
    fn ood_rows_and_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.models.truncate(1);
        let report = run_ood(&cfg).unwrap();
        assert!(report.failures.is_empty());
        let kinds: Vec<&str> = report.rows.iter().map(|r| r.kind_label()).collect();
        assert_eq!(kinds, vec!["in", "noise_swap", "freq_shift"]);
        assert_eq!(report.rows[0].mse_ratio, 1.0);
        let key = "AE/ComplexNet/-";
        let noise = report.noise_table(key, "high");
        assert_eq!(noise.row_labels, vec!["white"]);
        assert_eq!(noise.col_labels, vec!["surrogate", "white"]);
        let freq = report.freq_table(key, "high");
        assert_eq!(freq.col_labels, vec!["0 Hz", "300 Hz"]);
        let mut swapped = report.clone();
        for r in &mut swapped.rows {
            std::mem::swap(&mut r.train_noise, &mut r.test_noise);
        }
        assert_eq!(swapped.noise_table(key, "high"), noise.transpose());
        assert!(dir.path().join("ood.csv").exists());
    }

    #[test]
    fn transpose_is_an_involution() {
        let entries = vec![
            ("a".to_string(), "x".to_string(), "1".to_string()),
            ("b".to_string(), "y".to_string(), "2".to_string()),
        ];
        let t = LayoutTable::from_entries(&entries);
        assert_eq!(t.transpose().transpose(), t);
        assert_eq!(t.cells[0][1], None);
        assert_eq!(t.to_csv(), "train\\test,x,y\na,1,\nb,,2\n");
    }
}
