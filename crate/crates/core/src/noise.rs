//! Noise sources: white Gaussian, an ingested bank of measured records, and
//! a surrogate colored generator with a narrow band of elevated power.
//!
//! Every segment handed to the dataset builder is standardized: each of the
//! real and imaginary components is centered and scaled to unit sample
//! variance.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::container::{self, ContainerKind, PayloadReader, PayloadWriter};
use crate::error::{Error, Result};
use crate::signal::{stream_rng, ComplexSeries};

/// Length of one measured noise record.
pub const BANK_RECORD_LEN: usize = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    /// Center of the boosted band in Hz.
    pub center: f64,
    /// Width of the boosted band in Hz.
    pub bandwidth: f64,
    /// Power of the band component relative to the white base.
    pub gain: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self { center: 1600.0, bandwidth: 300.0, gain: 1.0 }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<()> {
        if !self.center.is_finite() {
            return Err(Error::invalid("surrogate center must be finite"));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::invalid("surrogate bandwidth must be positive"));
        }
        if !(self.gain.is_finite() && self.gain >= 0.0) {
            return Err(Error::invalid("surrogate gain must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    WhiteGaussian,
    MeasuredBank { path: PathBuf },
    SurrogateColored(SurrogateParams),
}

impl NoiseKind {
    /// Short label used in reports; surrogate cells are never labeled as measured.
    pub fn label(&self) -> &'static str {
        match self {
            NoiseKind::WhiteGaussian => "white",
            NoiseKind::MeasuredBank { .. } => "measured",
            NoiseKind::SurrogateColored(_) => "surrogate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Train,
    Val,
    Test,
    Unsplit,
}

/// A set of equal-length measured noise records.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank {
    records: Vec<Vec<Complex64>>,
    /// Index of each record in the original, unsplit bank.
    record_ids: Vec<usize>,
    provenance: Provenance,
}

impl NoiseBank {
    pub fn new(records: Vec<Vec<Complex64>>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyBank);
        }
        let len = records[0].len();
        if len == 0 || records.iter().any(|r| r.len() != len) {
            return Err(Error::invalid("noise bank records must share one nonzero length"));
        }
        let record_ids = (0..records.len()).collect();
        Ok(Self { records, record_ids, provenance: Provenance::Unsplit })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record_len(&self) -> usize {
        self.records[0].len()
    }

    pub fn records(&self) -> &[Vec<Complex64>] {
        &self.records
    }

    pub fn record_ids(&self) -> &[usize] {
        &self.record_ids
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Writes the bank as a `noisebank` container with `f32` samples.
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.record_len();
        let mut w = PayloadWriter::with_capacity(self.records.len() * n * 8);
        for r in &self.records {
            for z in r {
                w.f32(z.re as f32);
                w.f32(z.im as f32);
            }
        }
        let meta = serde_json::json!({
            "record_len": n,
            "records": self.records.len(),
            "provenance": self.provenance,
            "record_ids": self.record_ids,
        });
        container::write(path, ContainerKind::NoiseBank, meta, &w.finish())
    }
}

#[derive(Deserialize)]
struct BankMeta {
    record_len: usize,
    records: usize,
    provenance: Provenance,
    record_ids: Vec<usize>,
}

/// Loads a bank written by [`NoiseBank::save`]; records must have
/// [`BANK_RECORD_LEN`] samples.
pub fn load_noise_bank(path: &Path) -> Result<NoiseBank> {
    load_noise_bank_with_len(path, BANK_RECORD_LEN)
}

pub fn load_noise_bank_with_len(path: &Path, record_len: usize) -> Result<NoiseBank> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Err(Error::EmptyBank);
    }
    let (header, payload) = container::decode(&bytes, Some(ContainerKind::NoiseBank))?;
    let meta: BankMeta = serde_json::from_value(header.meta)?;
    if meta.records == 0 {
        return Err(Error::EmptyBank);
    }
    if meta.record_len != record_len {
        return Err(Error::Format(format!(
            "record length {} does not match expected {record_len}",
            meta.record_len
        )));
    }
    if meta.record_ids.len() != meta.records {
        return Err(Error::Format("record id list does not match record count".into()));
    }
    let mut r = PayloadReader::new(&payload);
    let mut records = Vec::with_capacity(meta.records);
    for _ in 0..meta.records {
        let mut rec = Vec::with_capacity(meta.record_len);
        for _ in 0..meta.record_len {
            let re = r.f32()? as f64;
            let im = r.f32()? as f64;
            rec.push(Complex64::new(re, im));
        }
        records.push(rec);
    }
    r.finish()?;
    Ok(NoiseBank { records, record_ids: meta.record_ids, provenance: meta.provenance })
}

/// Partitions an unsplit bank 60/20/20 at record granularity.
pub fn split_bank(bank: &NoiseBank, seed: u64) -> Result<(NoiseBank, NoiseBank, NoiseBank)> {
    if bank.provenance != Provenance::Unsplit {
        return Err(Error::invalid("bank is already split"));
    }
    let n = bank.len();
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 records to split, have {n}")));
    }
    let n_val = (n / 5).max(1);
    let n_test = (n / 5).max(1);
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, u64::MAX, 0));
    let part = |idx: &[usize], provenance| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        NoiseBank {
            records: idx.iter().map(|&i| bank.records[i].clone()).collect(),
            record_ids: idx.iter().map(|&i| bank.record_ids[i]).collect(),
            provenance,
        }
    };
    Ok((
        part(&order[..n_train], Provenance::Train),
        part(&order[n_train..n_train + n_val], Provenance::Val),
        part(&order[n_train + n_val..], Provenance::Test),
    ))
}

/// Where a bank segment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentRef {
    /// Original record id (stable across splits).
    pub record_id: usize,
    pub offset: usize,
}

/// A concrete noise source for segment draws.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    White,
    Surrogate(SurrogateParams),
    Bank(Arc<NoiseBank>),
}

pub fn white_noise<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexSeries {
    let values = (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        })
        .collect();
    ComplexSeries::from_vec_unchecked(values)
}

/// Frequency in Hz of DFT bin `k` for an `n`-point transform.
pub fn bin_frequency(k: usize, n: usize, dt: f64) -> f64 {
    let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    k / (n as f64 * dt)
}

/// White noise plus a band-limited component, then standardized.
pub fn surrogate_colored_noise<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    dt: f64,
    params: &SurrogateParams,
) -> Result<ComplexSeries> {
    params.validate()?;
    if n == 0 {
        return Err(Error::invalid("noise length must be positive"));
    }
    let base = white_noise(rng, n).into_inner();
    let mut band = white_noise(rng, n).into_inner();

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut band);
    let half = params.bandwidth / 2.0;
    let mut nearest = (0usize, f64::INFINITY);
    let mut kept = 0usize;
    for (k, z) in band.iter_mut().enumerate() {
        let off = (bin_frequency(k, n, dt) - params.center).abs();
        if off < nearest.1 {
            nearest = (k, off);
        }
        if off <= half {
            kept += 1;
        } else {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    if kept == 0 {
        // Band narrower than one bin: keep the closest bin only.
        let mut fresh = white_noise(rng, 1).into_inner()[0] * (n as f64).sqrt();
        std::mem::swap(&mut band[nearest.0], &mut fresh);
    }
    planner.plan_fft_inverse(n).process(&mut band);

    let p_base = base.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let p_band = band.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let scale = if p_band > 0.0 { (params.gain * p_base / p_band).sqrt() } else { 0.0 };
    let mut values: Vec<Complex64> = base.iter().zip(&band).map(|(b, c)| b + c * scale).collect();
    standardize(&mut values)?;
    Ok(ComplexSeries::from_vec_unchecked(values))
}

/// Sample variance with the `n − 1` denominator.
pub fn sample_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = xs.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

/// Centers each component and scales it to unit sample variance.
pub fn standardize(values: &mut [Complex64]) -> Result<()> {
    let n = values.len();
    if n < 2 {
        return Err(Error::invalid("cannot standardize fewer than two samples"));
    }
    let mean_re = values.iter().map(|z| z.re).sum::<f64>() / n as f64;
    let mean_im = values.iter().map(|z| z.im).sum::<f64>() / n as f64;
    let var_re = sample_variance(values.iter().map(|z| z.re));
    let var_im = sample_variance(values.iter().map(|z| z.im));
    if !(var_re > 0.0 && var_im > 0.0) {
        return Err(Error::Numerical("noise segment has a constant component".into()));
    }
    let (s_re, s_im) = (1.0 / var_re.sqrt(), 1.0 / var_im.sqrt());
    for z in values.iter_mut() {
        *z = Complex64::new((z.re - mean_re) * s_re, (z.im - mean_im) * s_im);
    }
    Ok(())
}

/// Draws one contiguous within-record slice, with replacement over
/// `(record, offset)` pairs, and standardizes it.
pub fn draw_bank_segment<R: Rng + ?Sized>(
    bank: &NoiseBank,
    rng: &mut R,
    n: usize,
) -> Result<(SegmentRef, ComplexSeries)> {
    let len = bank.record_len();
    if len < n {
        return Err(Error::invalid(format!("bank records have {len} samples, segment needs {n}")));
    }
    let r = rng.random_range(0..bank.len());
    let offset = rng.random_range(0..=len - n);
    let mut values = bank.records[r][offset..offset + n].to_vec();
    standardize(&mut values)?;
    Ok((
        SegmentRef { record_id: bank.record_ids[r], offset },
        ComplexSeries::from_vec_unchecked(values),
    ))
}

/// Draws a standardized noise segment of `n` samples from `source`.
pub fn draw_noise_segment<R: Rng + ?Sized>(
    source: &NoiseSource,
    rng: &mut R,
    n: usize,
    dt: f64,
) -> Result<ComplexSeries> {
    match source {
        NoiseSource::White => {
            let mut values = white_noise(rng, n).into_inner();
            standardize(&mut values)?;
            Ok(ComplexSeries::from_vec_unchecked(values))
        }
        NoiseSource::Surrogate(p) => surrogate_colored_noise(rng, n, dt, p),
        NoiseSource::Bank(bank) => draw_bank_segment(bank, rng, n).map(|(_, s)| s),
    }
}

/// Mean periodogram `|FFT(x)|²/n` over a set of series.
pub fn mean_periodogram(series: &[ComplexSeries]) -> Vec<f64> {
    let n = series.first().map_or(0, |s| s.len());
    let mut acc = vec![0.0; n];
    if n == 0 {
        return acc;
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for s in series {
        buf.copy_from_slice(s.as_slice());
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr() / n as f64;
        }
    }
    for a in &mut acc {
        *a /= series.len() as f64;
    }
    acc
}
