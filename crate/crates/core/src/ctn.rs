//! ConvTasNet with a three-layer encoder and decoder and a masking separator,
//! in complex or real wiring.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cvnn::{
    ArchMode, ChannelNorm, Conv1d, ConvGeometry, ConvTranspose1d, CoreNet, LossKind, PRelu, ParamView,
    Parameterized, Scalar, Sigmoid, Tensor, Wired,
};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::signal::{stream_rng, ComplexSeries, TimeGrid};
use crate::train::{fit, predict_all, History, TrainConfig, Trainable};

pub const WINDOWS: [usize; 3] = [32, 64, 128];
pub const N_SOURCES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CtnScale {
    Full,
    Desk,
}

impl std::str::FromStr for CtnScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(CtnScale::Full),
            "desk" => Ok(CtnScale::Desk),
            _ => Err(Error::invalid(format!("unknown scale '{s}' (expected full or desk)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtnSpec {
    pub mode: ArchMode,
    pub window: usize,
    pub n_filters: usize,
    pub bottleneck: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub blocks: usize,
    pub repeats: usize,
    pub signal_len: usize,
}

impl CtnSpec {
    pub fn new(mode: ArchMode, window: usize, scale: CtnScale) -> Self {
        let (n_filters, bottleneck, hidden, blocks, repeats) = match scale {
            CtnScale::Full => (512, 128, 512, 8, 3),
            CtnScale::Desk => (64, 32, 64, 4, 2),
        };
        Self {
            mode,
            window,
            n_filters,
            bottleneck,
            hidden,
            kernel: 3,
            blocks,
            repeats,
            signal_len: TimeGrid::DEFAULT_SAMPLES,
        }
    }

    pub fn stride(&self) -> usize {
        self.window / 2
    }

    /// Frames of the latent representation.
    pub fn frames(&self) -> usize {
        self.signal_len / self.stride()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 4 || self.window % 4 != 0 {
            return Err(Error::invalid(format!("window must be a positive multiple of 4, got {}", self.window)));
        }
        if self.signal_len == 0 || self.signal_len % self.stride() != 0 {
            return Err(Error::invalid(format!(
                "signal length {} is not a multiple of the stride {}",
                self.signal_len,
                self.stride()
            )));
        }
        if [self.n_filters, self.bottleneck, self.hidden, self.blocks, self.repeats].contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::invalid("separator kernel must be odd"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtnTrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl CtnTrainConfig {
    pub fn full(seed: u64) -> Self {
        Self { batch_size: 256, lr: 3e-3, max_epochs: 50, loss: LossKind::LogMse, seed }
    }

    /// Smaller batches and fewer epochs for the reduced-size datasets.
    pub fn desk(seed: u64) -> Self {
        Self { batch_size: 32, max_epochs: 20, ..Self::full(seed) }
    }
}

/// Conv → PReLU → conv → PReLU → conv.
#[derive(Debug, Clone)]
struct Stack3<T> {
    convs: Vec<Conv1d<T>>,
    acts: Vec<PRelu<T>>,
}

impl<T: Scalar> Stack3<T> {
    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x;
        for i in 0..self.convs.len() {
            h = self.convs[i].forward(h)?;
            if i < self.acts.len() {
                h = self.acts[i].forward(h)?;
            }
        }
        Ok(h)
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = g;
        for i in (0..self.convs.len()).rev() {
            if i < self.acts.len() {
                g = self.acts[i].backward(g)?;
            }
            g = self.convs[i].backward(g)?;
        }
        Ok(g)
    }

    fn collect<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        let mut acts = self.acts.iter_mut();
        for c in &mut self.convs {
            c.collect_params(out);
            if let Some(a) = acts.next() {
                a.collect_params(out);
            }
        }
    }
}

#[derive(Debug, Clone)]
struct ConvBlock<T> {
    in_conv: Conv1d<T>,
    act1: PRelu<T>,
    norm1: ChannelNorm<T>,
    depthwise: Conv1d<T>,
    act2: PRelu<T>,
    norm2: ChannelNorm<T>,
    res: Option<Conv1d<T>>,
    skip: Conv1d<T>,
}

impl<T: Scalar> ConvBlock<T> {
    fn new<R: rand::Rng + ?Sized>(spec: &CtnSpec, dilation: usize, residual: bool, rng: &mut R) -> Result<Self> {
        let (b, h) = (spec.bottleneck, spec.hidden);
        let one = ConvGeometry::new(1, 1, 1, 0)?;
        let pad = dilation * (spec.kernel - 1) / 2;
        Ok(Self {
            in_conv: Conv1d::new(b, h, one, true, rng),
            act1: PRelu::new(h),
            norm1: ChannelNorm::new(h),
            depthwise: Conv1d::depthwise(h, ConvGeometry::new(spec.kernel, 1, dilation, pad)?, true, rng),
            act2: PRelu::new(h),
            norm2: ChannelNorm::new(h),
            res: residual.then(|| Conv1d::new(h, b, one, true, rng)),
            skip: Conv1d::new(h, b, one, true, rng),
        })
    }

    /// Returns (residual output, skip contribution).
    fn forward(&mut self, x: Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let z = self.in_conv.forward(x.clone())?;
        let z = self.norm1.forward(self.act1.forward(z)?)?;
        let z = self.depthwise.forward(z)?;
        let z = self.norm2.forward(self.act2.forward(z)?)?;
        let skip = self.skip.forward(z.clone())?;
        let out = match &mut self.res {
            Some(res) => {
                let mut out = res.forward(z)?;
                out.add_assign(&x)?;
                out
            }
            None => x,
        };
        Ok((out, skip))
    }

    fn backward(&mut self, g_out: Tensor<T>, g_skip: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g_z = self.skip.backward(g_skip.clone())?;
        if let Some(res) = &mut self.res {
            g_z.add_assign(&res.backward(g_out.clone())?)?;
        }
        let g = self.act2.backward(self.norm2.backward(g_z)?)?;
        let g = self.depthwise.backward(g)?;
        let g = self.act1.backward(self.norm1.backward(g)?)?;
        let mut g_x = self.in_conv.backward(g)?;
        g_x.add_assign(&g_out)?;
        Ok(g_x)
    }

    fn collect<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        self.in_conv.collect_params(out);
        self.act1.collect_params(out);
        self.norm1.collect_params(out);
        self.depthwise.collect_params(out);
        self.act2.collect_params(out);
        self.norm2.collect_params(out);
        if let Some(r) = &mut self.res {
            r.collect_params(out);
        }
        self.skip.collect_params(out);
    }
}

/// Temporal convolution network producing one mask per source.
#[derive(Debug, Clone)]
struct Separator<T> {
    norm: ChannelNorm<T>,
    bottleneck: Conv1d<T>,
    blocks: Vec<ConvBlock<T>>,
    out_act: PRelu<T>,
    out_conv: Conv1d<T>,
    sigmoid: Sigmoid<T>,
}

impl<T: Scalar> Separator<T> {
    fn new<R: rand::Rng + ?Sized>(spec: &CtnSpec, rng: &mut R) -> Result<Self> {
        let one = ConvGeometry::new(1, 1, 1, 0)?;
        let total = spec.repeats * spec.blocks;
        let mut blocks = Vec::with_capacity(total);
        for i in 0..total {
            blocks.push(ConvBlock::new(spec, 1 << (i % spec.blocks), i + 1 < total, rng)?);
        }
        Ok(Self {
            norm: ChannelNorm::new(spec.n_filters),
            bottleneck: Conv1d::new(spec.n_filters, spec.bottleneck, one, true, rng),
            blocks,
            out_act: PRelu::new(spec.bottleneck),
            out_conv: Conv1d::new(spec.bottleneck, N_SOURCES * spec.n_filters, one, true, rng),
            sigmoid: Sigmoid::new(),
        })
    }

    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let mut h = self.bottleneck.forward(self.norm.forward(x)?)?;
        let mut skip_sum: Option<Tensor<T>> = None;
        for blk in &mut self.blocks {
            let (out, skip) = blk.forward(h)?;
            h = out;
            match &mut skip_sum {
                Some(s) => s.add_assign(&skip)?,
                None => skip_sum = Some(skip),
            }
        }
        let s = skip_sum.ok_or_else(|| Error::invalid("separator has no blocks"))?;
        self.sigmoid.forward(self.out_conv.forward(self.out_act.forward(s)?)?)
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let g = self.sigmoid.backward(g)?;
        let g_skip = self.out_act.backward(self.out_conv.backward(g)?)?;
        let mut g_h = Tensor::zeros(g_skip.shape());
        for blk in self.blocks.iter_mut().rev() {
            g_h = blk.backward(g_h, &g_skip)?;
        }
        self.norm.backward(self.bottleneck.backward(g_h)?)
    }

    fn collect<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        self.norm.collect_params(out);
        self.bottleneck.collect_params(out);
        for b in &mut self.blocks {
            b.collect(out);
        }
        self.out_act.collect_params(out);
        self.out_conv.collect_params(out);
    }
}

/// The full encoder → masking separator → decoder network on
/// `[batch, channels, len]`.
#[derive(Debug, Clone)]
pub struct CtnNet<T> {
    encoder: Stack3<T>,
    separator: Separator<T>,
    decoder: Stack3<T>,
    synth: ConvTranspose1d<T>,
    out_channels: usize,
    /// Sources passed through the decoder; training supervises source 0 only.
    decode_sources: usize,
    cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> CtnNet<T> {
    fn new(spec: &CtnSpec, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, stream, 0);
        let (n, w) = (spec.n_filters, spec.window);
        let ch = spec.mode.core_channels();
        let frame = ConvGeometry::new(w, w / 2, 1, w / 4)?;
        let same = ConvGeometry::new(3, 1, 1, 1)?;
        let encoder = Stack3 {
            convs: vec![
                Conv1d::new(ch, n, frame, false, &mut rng),
                Conv1d::new(n, n, same, true, &mut rng),
                Conv1d::new(n, n, same, true, &mut rng),
            ],
            acts: vec![PRelu::new(n), PRelu::new(n)],
        };
        let separator = Separator::new(spec, &mut rng)?;
        let decoder = Stack3 {
            convs: vec![Conv1d::new(n, n, same, true, &mut rng), Conv1d::new(n, n, same, true, &mut rng)],
            acts: vec![PRelu::new(n), PRelu::new(n)],
        };
        let synth = ConvTranspose1d::new(n, ch, frame, false, &mut rng);
        Ok(Self {
            encoder,
            separator,
            decoder,
            synth,
            out_channels: ch,
            decode_sources: 1,
            cache: None,
        })
    }
}

impl<T: Scalar> Parameterized for CtnNet<T> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        self.encoder.collect(out);
        self.separator.collect(out);
        self.decoder.collect(out);
        self.synth.collect_params(out);
    }
}

impl<T: Scalar> CoreNet<T> for CtnNet<T> {
    /// `[batch, ch, len]` → `[batch, sources·ch, len]`.
    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let enc = self.encoder.forward(x)?;
        let mask = self.separator.forward(enc.clone())?;
        let (b, n, f) = enc.dims3()?;
        let ds = self.decode_sources;
        let mut masked = vec![T::zero(); b * ds * n * f];
        for bi in 0..b {
            let e = &enc.data()[bi * n * f..(bi + 1) * n * f];
            for s in 0..ds {
                let m = &mask.data()[(bi * N_SOURCES + s) * n * f..(bi * N_SOURCES + s + 1) * n * f];
                let dst = &mut masked[(bi * ds + s) * n * f..(bi * ds + s + 1) * n * f];
                for ((d, ev), mv) in dst.iter_mut().zip(e).zip(m) {
                    *d = *ev * *mv;
                }
            }
        }
        let h = self.decoder.forward(Tensor::from_vec(&[b * ds, n, f], masked)?)?;
        let y = self.synth.forward(h)?;
        let len = y.dims3()?.2;
        self.cache = Some((enc, mask));
        y.reshape(&[b, ds * self.out_channels, len])
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<()> {
        let (enc, mask) = self.cache.take().ok_or_else(|| Error::invalid("ctn backward without forward"))?;
        let (b, n, f) = enc.dims3()?;
        let ds = self.decode_sources;
        let (_, _, len) = grad.dims3()?;
        let g = self.synth.backward(grad.reshape(&[b * ds, self.out_channels, len])?)?;
        let g_masked = self.decoder.backward(g)?;
        let mut g_enc = vec![T::zero(); b * n * f];
        let mut g_mask = vec![T::zero(); b * N_SOURCES * n * f];
        for bi in 0..b {
            let e = &enc.data()[bi * n * f..(bi + 1) * n * f];
            let ge = &mut g_enc[bi * n * f..(bi + 1) * n * f];
            for s in 0..ds {
                let off = (bi * N_SOURCES + s) * n * f;
                let m = &mask.data()[off..off + n * f];
                let gm = &mut g_mask[off..off + n * f];
                let gs = &g_masked.data()[(bi * ds + s) * n * f..(bi * ds + s + 1) * n * f];
                for i in 0..n * f {
                    ge[i] += gs[i] * m[i].conj();
                    gm[i] = gs[i] * e[i].conj();
                }
            }
        }
        let mut g_enc = Tensor::from_vec(&[b, n, f], g_enc)?;
        g_enc.add_assign(&self.separator.backward(Tensor::from_vec(&[b, N_SOURCES * n, f], g_mask)?)?)?;
        self.encoder.backward(g_enc)?;
        self.cache = Some((enc, mask));
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CtnModel {
    pub spec: CtnSpec,
    pub net: Wired<CtnNet<Complex64>, CtnNet<f64>>,
}

pub fn build_ctn(spec: &CtnSpec, seed: u64) -> Result<CtnModel> {
    spec.validate()?;
    let net = match spec.mode {
        ArchMode::ComplexNet => Wired::ComplexNet(CtnNet::new(spec, seed, 0)?),
        ArchMode::DualReal1 => Wired::DualReal1(CtnNet::new(spec, seed, 0)?),
        ArchMode::DualReal2 => Wired::DualReal2(CtnNet::new(spec, seed, 0)?, CtnNet::new(spec, seed, 1)?),
        ArchMode::DualReal1C => Wired::DualReal1C(CtnNet::new(spec, seed, 0)?),
    };
    Ok(CtnModel { spec: spec.clone(), net })
}

impl CtnModel {
    fn set_decode_sources(&mut self, k: usize) {
        match &mut self.net {
            Wired::ComplexNet(c) => c.decode_sources = k,
            Wired::DualReal1(r) | Wired::DualReal1C(r) => r.decode_sources = k,
            Wired::DualReal2(a, b) => {
                a.decode_sources = k;
                b.decode_sources = k;
            }
        }
    }

    /// Both source estimates `[batch, 2, len]` for a batch of noisy signals.
    pub fn separate(&mut self, noisy: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
        self.set_decode_sources(N_SOURCES);
        let out = self.net.forward(noisy);
        self.set_decode_sources(1);
        out
    }
}

impl Parameterized for CtnModel {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        self.net.collect_params(out);
    }
}

impl Trainable for CtnModel {
    fn predict(&mut self, noisy: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
        let (b, n) = noisy.dims2()?;
        if n != self.spec.signal_len {
            return Err(Error::shape(format!("ConvTasNet expects {} samples, got {n}", self.spec.signal_len)));
        }
        self.net.forward(noisy)?.reshape(&[b, n])
    }

    fn backprop(&mut self, grad: &Tensor<Complex64>) -> Result<()> {
        let (b, n) = grad.dims2()?;
        self.net.backward(&grad.clone().reshape(&[b, 1, n])?)
    }
}

/// Minibatch Adam on source 0; returns the best-validation model.
pub fn train_ctn(mut model: CtnModel, split: &Split, cfg: &CtnTrainConfig) -> Result<(CtnModel, History)> {
    let tc = TrainConfig {
        lr: cfg.lr,
        max_epochs: cfg.max_epochs,
        batch_size: Some(cfg.batch_size),
        patience: None,
        loss: cfg.loss,
        seed: cfg.seed,
    };
    let history = fit(&mut model, &split.train, &split.val, &tc)?;
    model.quantize_f32();
    Ok((model, history))
}

/// Signal estimate (source 0).
pub fn ctn_denoise(model: &mut CtnModel, noisy: &ComplexSeries) -> Result<ComplexSeries> {
    noisy.check_len(model.spec.signal_len)?;
    Ok(predict_all(model, std::slice::from_ref(noisy))?.remove(0))
}
