//! Labeled dataset generation, out-of-distribution variants, and the
//! `.nqr` dataset container.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{self, ContainerKind, PayloadReader, PayloadWriter};
use crate::error::{Error, Result};
use crate::noise::{
    draw_noise_segment, load_noise_bank, split_bank, NoiseKind, NoiseSource, SurrogateParams,
};
use crate::signal::{
    sample_voigt_params, stream_rng, voigt_signal, ComplexSeries, SnrRegime, TimeGrid, VoigtParams,
};

/// Center frequency of the high band in Hz.
pub const HIGH_BAND_F0: f64 = 1600.0;
/// Frequency offset applied by [`OodKind::FreqShift`].
pub const FREQ_SHIFT_HZ: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub const FULL: SplitSizes = SplitSizes { train: 6000, val: 2000, test: 2000 };
    pub const DESK: SplitSizes = SplitSizes { train: 1500, val: 500, test: 500 };
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub noise: NoiseKind,
    /// Noise kind exchanged with `noise` by [`OodKind::NoiseSwap`].
    pub swap_noise: NoiseKind,
    pub f0: f64,
    pub regime: SnrRegime,
    pub sizes: SplitSizes,
    pub grid: TimeGrid,
    pub master_seed: u64,
}

impl DatasetConfig {
    pub fn new(noise: NoiseKind, f0: f64, regime: SnrRegime, master_seed: u64) -> Self {
        Self {
            noise,
            swap_noise: NoiseKind::SurrogateColored(SurrogateParams::default()),
            f0,
            regime,
            sizes: SplitSizes::default(),
            grid: TimeGrid::default(),
            master_seed,
        }
    }

    pub fn with_sizes(mut self, sizes: SplitSizes) -> Self {
        self.sizes = sizes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.f0.is_finite() {
            return Err(Error::invalid("center frequency must be finite"));
        }
        if self.sizes.train == 0 || self.sizes.val == 0 || self.sizes.test == 0 {
            return Err(Error::invalid("all split sizes must be positive"));
        }
        if let NoiseKind::SurrogateColored(p) = &self.noise {
            p.validate()?;
        }
        Ok(())
    }

    /// Human-readable cell label, e.g. `white/f0=0/low`.
    pub fn label(&self) -> String {
        format!("{}/f0={}/{}", self.noise.label(), self.f0, self.regime.name())
    }
}

/// One training example: the clean signal, its noisy observation, and the
/// parameters that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub clean: ComplexSeries,
    pub noisy: ComplexSeries,
    pub params: VoigtParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub config: DatasetConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    fn stream_id(self) -> u64 {
        match self {
            Part::Train => 0,
            Part::Val => 1,
            Part::Test => 2,
        }
    }
}

impl Split {
    pub fn part(&self, part: Part) -> &[LabeledExample] {
        match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn quantize(z: Complex64) -> Complex64 {
    Complex64::new(z.re as f32 as f64, z.im as f32 as f64)
}

/// Master seed mixed with the center frequency, so a frequency-shifted test
/// set draws fresh noise rather than replaying the in-distribution draws.
fn effective_seed(config: &DatasetConfig) -> u64 {
    config.master_seed ^ config.f0.to_bits().rotate_left(17)
}

fn sources(config: &DatasetConfig) -> Result<[NoiseSource; 3]> {
    Ok(match &config.noise {
        NoiseKind::WhiteGaussian => [NoiseSource::White, NoiseSource::White, NoiseSource::White],
        NoiseKind::SurrogateColored(p) => {
            [NoiseSource::Surrogate(*p), NoiseSource::Surrogate(*p), NoiseSource::Surrogate(*p)]
        }
        NoiseKind::MeasuredBank { path } => {
            let bank = load_noise_bank(path)?;
            let (tr, va, te) = split_bank(&bank, config.master_seed)?;
            [NoiseSource::Bank(Arc::new(tr)), NoiseSource::Bank(Arc::new(va)), NoiseSource::Bank(Arc::new(te))]
        }
    })
}

/// Generates one example; samples are rounded to `f32` so that in-memory
/// data equals what the container stores.
pub fn generate_example(
    config: &DatasetConfig,
    source: &NoiseSource,
    part: Part,
    index: usize,
) -> Result<LabeledExample> {
    let mut rng = stream_rng(effective_seed(config), part.stream_id(), index as u64);
    let params = sample_voigt_params(&mut rng, config.f0, config.regime);
    let clean = voigt_signal(&params, &config.grid)?;
    let noise = draw_noise_segment(source, &mut rng, config.grid.n_samples(), config.grid.dt())?;
    let noisy: Vec<Complex64> = clean.iter().zip(noise.iter()).map(|(c, e)| quantize(c + e)).collect();
    let clean: Vec<Complex64> = clean.iter().map(|&c| quantize(c)).collect();
    Ok(LabeledExample {
        clean: ComplexSeries::from_vec_unchecked(clean),
        noisy: ComplexSeries::from_vec_unchecked(noisy),
        params,
    })
}

pub fn build_dataset(config: &DatasetConfig) -> Result<Split> {
    config.validate()?;
    let [s_train, s_val, s_test] = sources(config)?;
    let gen = |part: Part, n: usize, src: &NoiseSource| -> Result<Vec<LabeledExample>> {
        (0..n).into_par_iter().map(|i| generate_example(config, src, part, i)).collect()
    };
    Ok(Split {
        train: gen(Part::Train, config.sizes.train, &s_train)?,
        val: gen(Part::Val, config.sizes.val, &s_val)?,
        test: gen(Part::Test, config.sizes.test, &s_test)?,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodKind {
    /// Exchange the training noise with the configured alternative.
    NoiseSwap,
    /// Move the signal band up by 300 Hz.
    FreqShift,
}

pub fn ood_variant(config: &DatasetConfig, kind: OodKind) -> DatasetConfig {
    let mut out = config.clone();
    match kind {
        OodKind::NoiseSwap => std::mem::swap(&mut out.noise, &mut out.swap_noise),
        OodKind::FreqShift => out.f0 += FREQ_SHIFT_HZ,
    }
    out
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    grid: TimeGrid,
    config: DatasetConfig,
    counts: SplitSizes,
}

const PARAMS_PER_RECORD: usize = 5;

pub fn encode_dataset(split: &Split) -> Result<Vec<u8>> {
    let n = split.config.grid.n_samples();
    let mut w = PayloadWriter::with_capacity(split.len() * (n * 16 + PARAMS_PER_RECORD * 8));
    for ex in split.train.iter().chain(&split.val).chain(&split.test) {
        ex.clean.check_len(n)?;
        ex.noisy.check_len(n)?;
        for series in [&ex.clean, &ex.noisy] {
            for z in series {
                w.f32(z.re as f32);
                w.f32(z.im as f32);
            }
        }
        for p in ex.params.to_array() {
            w.f64(p);
        }
    }
    let meta = DatasetMeta {
        grid: split.config.grid,
        config: split.config.clone(),
        counts: SplitSizes { train: split.train.len(), val: split.val.len(), test: split.test.len() },
    };
    container::encode(ContainerKind::Dataset, serde_json::to_value(meta)?, &w.finish())
}

pub fn write_dataset(split: &Split, path: &Path) -> Result<()> {
    let bytes = encode_dataset(split)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Split> {
    let (header, payload) = container::decode(bytes, Some(ContainerKind::Dataset))?;
    let meta: DatasetMeta = serde_json::from_value(header.meta)?;
    let n = meta.grid.n_samples();
    let mut r = PayloadReader::new(&payload);
    let read_series = |r: &mut PayloadReader| -> Result<ComplexSeries> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let re = r.f32()? as f64;
            let im = r.f32()? as f64;
            v.push(Complex64::new(re, im));
        }
        ComplexSeries::new(v)
    };
    let read_part = |count: usize, r: &mut PayloadReader| -> Result<Vec<LabeledExample>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let clean = read_series(r)?;
            let noisy = read_series(r)?;
            let mut p = [0.0; PARAMS_PER_RECORD];
            for v in &mut p {
                *v = r.f64()?;
            }
            out.push(LabeledExample { clean, noisy, params: VoigtParams::from_array(p) });
        }
        Ok(out)
    };
    let train = read_part(meta.counts.train, &mut r)?;
    let val = read_part(meta.counts.val, &mut r)?;
    let test = read_part(meta.counts.test, &mut r)?;
    r.finish()?;
    Ok(Split { train, val, test, config: meta.config })
}

pub fn read_dataset(path: &Path) -> Result<Split> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

/// Checksum recorded in a container header, used for report provenance.
pub fn dataset_checksum(split: &Split) -> Result<String> {
    let bytes = encode_dataset(split)?;
    let (header, _) = container::decode(&bytes, Some(ContainerKind::Dataset))?;
    Ok(header.checksum)
}

#[derive(Serialize, Deserialize)]
struct SeriesMeta {
    count: usize,
    len: usize,
    dt: Option<f64>,
}

/// Writes unlabeled complex series (e.g. measurements) as `f64` pairs.
pub fn write_series(path: &Path, series: &[ComplexSeries], dt: Option<f64>) -> Result<()> {
    let len = series.first().map_or(0, ComplexSeries::len);
    let mut w = PayloadWriter::with_capacity(series.len() * len * 16);
    for s in series {
        s.check_len(len)?;
        for z in s {
            w.f64(z.re);
            w.f64(z.im);
        }
    }
    let meta = SeriesMeta { count: series.len(), len, dt };
    container::write(path, ContainerKind::Series, serde_json::to_value(meta)?, &w.finish())
}

/// Reads series written by [`write_series`], with the sample spacing if recorded.
pub fn read_series(path: &Path) -> Result<(Vec<ComplexSeries>, Option<f64>)> {
    let (header, payload) = container::read(path, Some(ContainerKind::Series))?;
    let meta: SeriesMeta = serde_json::from_value(header.meta)?;
    let mut r = PayloadReader::new(&payload);
    let mut out = Vec::with_capacity(meta.count);
    for _ in 0..meta.count {
        let mut v = Vec::with_capacity(meta.len);
        for _ in 0..meta.len {
            let re = r.f64()?;
            v.push(Complex64::new(re, r.f64()?));
        }
        out.push(ComplexSeries::new(v)?);
    }
    r.finish()?;
    Ok((out, meta.dt))
}
