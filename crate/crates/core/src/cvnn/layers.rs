//! Layers with explicit forward caches and hand-written backward passes.
//!
//! Every layer is generic over [`Scalar`], so one implementation serves the
//! real and the complex networks.

use std::borrow::Cow;

use rand::Rng;

use super::param::{Param, ParamView, Parameterized};
use super::scalar::matmul;
use super::{ActivationKind, Scalar, Tensor};
use crate::error::{Error, Result};

fn conj_cow<T: Scalar>(v: &[T]) -> Cow<'_, [T]> {
    if T::IS_COMPLEX {
        Cow::Owned(v.iter().map(|x| x.conj()).collect())
    } else {
        Cow::Borrowed(v)
    }
}

fn missing_cache(layer: &str) -> Error {
    Error::invalid(format!("{layer}: backward called without a recorded forward pass"))
}

/// Fully connected layer `y = W·x + b` on `[batch, features]`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_features: usize,
    out_features: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::glorot(&[out_features, in_features], in_features, out_features, rng),
            bias: Param::filled(&[out_features], T::zero()),
            in_features,
            out_features,
            cache: None,
        }
    }

    pub fn from_parts(weight: Vec<T>, bias: Vec<T>, in_features: usize, out_features: usize) -> Result<Self> {
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(Error::shape("linear weight/bias sizes do not match the layer dimensions"));
        }
        Ok(Self {
            weight: Param::new(&[out_features, in_features], weight),
            bias: Param::new(&[out_features], bias),
            in_features,
            out_features,
            cache: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (b, f) = x.dims2()?;
        if f != self.in_features {
            return Err(Error::shape(format!("linear expects {} features, got {f}", self.in_features)));
        }
        let o = self.out_features;
        let mut y = vec![T::zero(); b * o];
        for row in y.chunks_mut(o) {
            row.copy_from_slice(&self.bias.value);
        }
        matmul(false, true, b, o, f, x.data(), &self.weight.value, 1.0, &mut y);
        self.cache = Some(x);
        Tensor::from_vec(&[b, o], y)
    }

    pub fn backward(&mut self, gy: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("linear"))?;
        let (b, f) = x.dims2()?;
        let o = self.out_features;
        if gy.shape() != [b, o] {
            return Err(Error::shape(format!("linear gradient shape {:?}, expected [{b}, {o}]", gy.shape())));
        }
        let g = gy.data();
        for row in g.chunks(o) {
            for (gb, v) in self.bias.grad.iter_mut().zip(row) {
                *gb += *v;
            }
        }
        let xc = conj_cow(x.data());
        matmul(true, false, o, f, b, g, &xc, 1.0, &mut self.weight.grad);
        let wc = conj_cow(&self.weight.value);
        let mut gx = vec![T::zero(); b * f];
        matmul(false, false, b, f, o, g, &wc, 0.0, &mut gx);
        Tensor::from_vec(&[b, f], gx)
    }
}

impl<T: Scalar> Parameterized for Linear<T> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        out.push(self.weight.view());
        out.push(self.bias.view());
    }
}

/// Geometry shared by convolution layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, dilation: usize, padding: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 || dilation == 0 {
            return Err(Error::invalid("kernel, stride and dilation must be positive"));
        }
        Ok(Self { kernel, stride, dilation, padding })
    }

    /// `floor((n + 2·pad − dilation·(k−1) − 1)/stride) + 1`.
    pub fn out_len(&self, n: usize) -> Result<usize> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = n + 2 * self.padding;
        if padded < span {
            return Err(Error::invalid(format!(
                "input of length {n} (padding {}) is shorter than the receptive field {span}",
                self.padding
            )));
        }
        Ok((padded - span) / self.stride + 1)
    }

    /// Input position read by output `t`, tap `k` (may fall in the padding).
    #[inline]
    fn pos(&self, t: usize, k: usize) -> isize {
        (t * self.stride + k * self.dilation) as isize - self.padding as isize
    }
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    /// im2col matrix `[C·K, B·Lo]` (dense) or the raw input (depthwise).
    data: Vec<T>,
    batch: usize,
    in_len: usize,
    out_len: usize,
}

/// 1-D convolution (cross-correlation) on `[batch, channels, len]`, dense or
/// depthwise.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_ch: usize,
    out_ch: usize,
    depthwise: bool,
    geom: ConvGeometry,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        geom: ConvGeometry,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let k = geom.kernel;
        Self {
            weight: Param::glorot(&[out_ch, in_ch, k], in_ch * k, out_ch * k, rng),
            bias: bias.then(|| Param::filled(&[out_ch], T::zero())),
            in_ch,
            out_ch,
            depthwise: false,
            geom,
            cache: None,
        }
    }

    /// One filter per channel (`groups = channels`).
    pub fn depthwise<R: Rng + ?Sized>(channels: usize, geom: ConvGeometry, bias: bool, rng: &mut R) -> Self {
        let k = geom.kernel;
        Self {
            weight: Param::glorot(&[channels, 1, k], k, k, rng),
            bias: bias.then(|| Param::filled(&[channels], T::zero())),
            in_ch: channels,
            out_ch: channels,
            depthwise: true,
            geom,
            cache: None,
        }
    }

    pub fn geometry(&self) -> ConvGeometry {
        self.geom
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, l) = x.dims3()?;
        if c != self.in_ch {
            return Err(Error::shape(format!("conv expects {} channels, got {c}", self.in_ch)));
        }
        let lo = self.geom.out_len(l)?;
        let mut y = if self.depthwise { self.forward_depthwise(&x, lo) } else { self.forward_dense(&x, lo) };
        if let Some(bias) = &self.bias {
            for bi in 0..b {
                for (o, bv) in bias.value.iter().enumerate() {
                    let off = (bi * self.out_ch + o) * lo;
                    y[off..off + lo].iter_mut().for_each(|v| *v += *bv);
                }
            }
        }
        if self.depthwise {
            self.cache = Some(ConvCache { data: x.into_data(), batch: b, in_len: l, out_len: lo });
        }
        Tensor::from_vec(&[b, self.out_ch, lo], y)
    }

    fn forward_dense(&mut self, x: &Tensor<T>, lo: usize) -> Vec<T> {
        let (b, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let k = self.geom.kernel;
        let nl = b * lo;
        let mut cols = vec![T::zero(); c * k * nl];
        let xd = x.data();
        for ci in 0..c {
            for ki in 0..k {
                let row = &mut cols[(ci * k + ki) * nl..(ci * k + ki + 1) * nl];
                for bi in 0..b {
                    let src = &xd[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    let dst = &mut row[bi * lo..(bi + 1) * lo];
                    for (t, d) in dst.iter_mut().enumerate() {
                        let p = self.geom.pos(t, ki);
                        if p >= 0 && (p as usize) < l {
                            *d = src[p as usize];
                        }
                    }
                }
            }
        }
        let o = self.out_ch;
        let mut y2 = vec![T::zero(); o * nl];
        matmul(false, false, o, nl, c * k, &self.weight.value, &cols, 0.0, &mut y2);
        let mut y = vec![T::zero(); b * o * lo];
        for oi in 0..o {
            for bi in 0..b {
                y[(bi * o + oi) * lo..(bi * o + oi + 1) * lo]
                    .copy_from_slice(&y2[oi * nl + bi * lo..oi * nl + (bi + 1) * lo]);
            }
        }
        self.cache = Some(ConvCache { data: cols, batch: b, in_len: l, out_len: lo });
        y
    }

    fn forward_depthwise(&self, x: &Tensor<T>, lo: usize) -> Vec<T> {
        let (b, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let k = self.geom.kernel;
        let xd = x.data();
        let mut y = vec![T::zero(); b * c * lo];
        for bi in 0..b {
            for ci in 0..c {
                let src = &xd[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                let dst = &mut y[(bi * c + ci) * lo..(bi * c + ci + 1) * lo];
                for ki in 0..k {
                    let w = self.weight.value[ci * k + ki];
                    for (t, d) in dst.iter_mut().enumerate() {
                        let p = self.geom.pos(t, ki);
                        if p >= 0 && (p as usize) < l {
                            *d += w * src[p as usize];
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&mut self, gy: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("conv1d"))?;
        let (b, l, lo) = (cache.batch, cache.in_len, cache.out_len);
        if gy.shape() != [b, self.out_ch, lo] {
            return Err(Error::shape(format!("conv gradient shape {:?} does not match output", gy.shape())));
        }
        let g = gy.data();
        if let Some(bias) = &mut self.bias {
            for bi in 0..b {
                for (o, gb) in bias.grad.iter_mut().enumerate() {
                    let off = (bi * self.out_ch + o) * lo;
                    for v in &g[off..off + lo] {
                        *gb += *v;
                    }
                }
            }
        }
        let gx = if self.depthwise {
            self.backward_depthwise(&cache, g)
        } else {
            self.backward_dense(&cache, g)
        };
        self.cache = Some(cache);
        Tensor::from_vec(&[b, self.in_ch, l], gx)
    }

    fn backward_dense(&mut self, cache: &ConvCache<T>, g: &[T]) -> Vec<T> {
        let (b, l, lo) = (cache.batch, cache.in_len, cache.out_len);
        let (c, o, k) = (self.in_ch, self.out_ch, self.geom.kernel);
        let nl = b * lo;
        let mut gy2 = vec![T::zero(); o * nl];
        for oi in 0..o {
            for bi in 0..b {
                gy2[oi * nl + bi * lo..oi * nl + (bi + 1) * lo]
                    .copy_from_slice(&g[(bi * o + oi) * lo..(bi * o + oi + 1) * lo]);
            }
        }
        let colsc = conj_cow(&cache.data);
        matmul(false, true, o, c * k, nl, &gy2, &colsc, 1.0, &mut self.weight.grad);
        let wc = conj_cow(&self.weight.value);
        let mut gcols = vec![T::zero(); c * k * nl];
        matmul(true, false, c * k, nl, o, &wc, &gy2, 0.0, &mut gcols);
        let mut gx = vec![T::zero(); b * c * l];
        for ci in 0..c {
            for ki in 0..k {
                let row = &gcols[(ci * k + ki) * nl..(ci * k + ki + 1) * nl];
                for bi in 0..b {
                    let dst = &mut gx[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    for (t, v) in row[bi * lo..(bi + 1) * lo].iter().enumerate() {
                        let p = self.geom.pos(t, ki);
                        if p >= 0 && (p as usize) < l {
                            dst[p as usize] += *v;
                        }
                    }
                }
            }
        }
        gx
    }

    fn backward_depthwise(&mut self, cache: &ConvCache<T>, g: &[T]) -> Vec<T> {
        let (b, l, lo) = (cache.batch, cache.in_len, cache.out_len);
        let (c, k) = (self.in_ch, self.geom.kernel);
        let xd = &cache.data;
        let mut gx = vec![T::zero(); b * c * l];
        for bi in 0..b {
            for ci in 0..c {
                let src = &xd[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                let gsrc = &g[(bi * c + ci) * lo..(bi * c + ci + 1) * lo];
                let dst = &mut gx[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                for ki in 0..k {
                    let wc = self.weight.value[ci * k + ki].conj();
                    let mut gw = T::zero();
                    for (t, gv) in gsrc.iter().enumerate() {
                        let p = self.geom.pos(t, ki);
                        if p >= 0 && (p as usize) < l {
                            gw += *gv * src[p as usize].conj();
                            dst[p as usize] += *gv * wc;
                        }
                    }
                    self.weight.grad[ci * k + ki] += gw;
                }
            }
        }
        gx
    }
}

impl<T: Scalar> Parameterized for Conv1d<T> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        out.push(self.weight.view());
        if let Some(b) = &mut self.bias {
            out.push(b.view());
        }
    }
}

/// Transposed 1-D convolution (overlap-add synthesis) on `[batch, channels, len]`.
///
/// Output length is `(n − 1)·stride − 2·pad + dilation·(k − 1) + 1`.
#[derive(Debug, Clone)]
pub struct ConvTranspose1d<T> {
    /// `[in, out, k]`.
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_ch: usize,
    out_ch: usize,
    geom: ConvGeometry,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> ConvTranspose1d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        geom: ConvGeometry,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let k = geom.kernel;
        Self {
            weight: Param::glorot(&[in_ch, out_ch, k], in_ch * k, out_ch * k, rng),
            bias: bias.then(|| Param::filled(&[out_ch], T::zero())),
            in_ch,
            out_ch,
            geom,
            cache: None,
        }
    }

    pub fn out_len(&self, n: usize) -> Result<usize> {
        let g = self.geom;
        let full = (n.max(1) - 1) * g.stride + g.dilation * (g.kernel - 1) + 1;
        if n == 0 || full <= 2 * g.padding {
            return Err(Error::invalid(format!("transposed conv input of length {n} is too short")));
        }
        Ok(full - 2 * g.padding)
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, lin) = x.dims3()?;
        if c != self.in_ch {
            return Err(Error::shape(format!("transposed conv expects {} channels, got {c}", self.in_ch)));
        }
        let lout = self.out_len(lin)?;
        let (o, k) = (self.out_ch, self.geom.kernel);
        let nl = b * lin;
        let mut xs = vec![T::zero(); c * nl];
        let xd = x.data();
        for ci in 0..c {
            for bi in 0..b {
                xs[ci * nl + bi * lin..ci * nl + (bi + 1) * lin]
                    .copy_from_slice(&xd[(bi * c + ci) * lin..(bi * c + ci + 1) * lin]);
            }
        }
        let mut cols = vec![T::zero(); o * k * nl];
        matmul(true, false, o * k, nl, c, &self.weight.value, &xs, 0.0, &mut cols);
        let mut y = vec![T::zero(); b * o * lout];
        for oi in 0..o {
            for ki in 0..k {
                let row = &cols[(oi * k + ki) * nl..(oi * k + ki + 1) * nl];
                for bi in 0..b {
                    let dst = &mut y[(bi * o + oi) * lout..(bi * o + oi + 1) * lout];
                    for (j, v) in row[bi * lin..(bi + 1) * lin].iter().enumerate() {
                        let p = self.geom.pos(j, ki);
                        if p >= 0 && (p as usize) < lout {
                            dst[p as usize] += *v;
                        }
                    }
                }
            }
        }
        if let Some(bias) = &self.bias {
            for bi in 0..b {
                for (oi, bv) in bias.value.iter().enumerate() {
                    y[(bi * o + oi) * lout..(bi * o + oi + 1) * lout].iter_mut().for_each(|v| *v += *bv);
                }
            }
        }
        self.cache = Some(ConvCache { data: xs, batch: b, in_len: lin, out_len: lout });
        Tensor::from_vec(&[b, o, lout], y)
    }

    pub fn backward(&mut self, gy: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("conv_transpose1d"))?;
        let (b, lin, lout) = (cache.batch, cache.in_len, cache.out_len);
        let (c, o, k) = (self.in_ch, self.out_ch, self.geom.kernel);
        if gy.shape() != [b, o, lout] {
            return Err(Error::shape(format!("transposed conv gradient shape {:?} does not match", gy.shape())));
        }
        let g = gy.data();
        if let Some(bias) = &mut self.bias {
            for bi in 0..b {
                for (oi, gb) in bias.grad.iter_mut().enumerate() {
                    for v in &g[(bi * o + oi) * lout..(bi * o + oi + 1) * lout] {
                        *gb += *v;
                    }
                }
            }
        }
        let nl = b * lin;
        let mut gcols = vec![T::zero(); o * k * nl];
        for oi in 0..o {
            for ki in 0..k {
                let row = &mut gcols[(oi * k + ki) * nl..(oi * k + ki + 1) * nl];
                for bi in 0..b {
                    let src = &g[(bi * o + oi) * lout..(bi * o + oi + 1) * lout];
                    for (j, d) in row[bi * lin..(bi + 1) * lin].iter_mut().enumerate() {
                        let p = self.geom.pos(j, ki);
                        if p >= 0 && (p as usize) < lout {
                            *d = src[p as usize];
                        }
                    }
                }
            }
        }
        let xsc = conj_cow(&cache.data);
        matmul(false, true, c, o * k, nl, &xsc, &gcols, 1.0, &mut self.weight.grad);
        let wc = conj_cow(&self.weight.value);
        let mut gxs = vec![T::zero(); c * nl];
        matmul(false, false, c, nl, o * k, &wc, &gcols, 0.0, &mut gxs);
        let mut gx = vec![T::zero(); b * c * lin];
        for ci in 0..c {
            for bi in 0..b {
                gx[(bi * c + ci) * lin..(bi * c + ci + 1) * lin]
                    .copy_from_slice(&gxs[ci * nl + bi * lin..ci * nl + (bi + 1) * lin]);
            }
        }
        Tensor::from_vec(&[b, c, lin], gx)
    }
}

impl<T: Scalar> Parameterized for ConvTranspose1d<T> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        out.push(self.weight.view());
        if let Some(b) = &mut self.bias {
            out.push(b.view());
        }
    }
}

/// Channel index of flat position `i` in a `[batch, channels, len]` tensor
/// (`len = 1` for `[batch, features]` with a single shared slope).
fn channel_of(i: usize, channels: usize, len: usize) -> usize {
    (i / len) % channels
}

/// Parametric ReLU with one real slope per channel, applied to the real and
/// imaginary parts independently.
#[derive(Debug, Clone)]
pub struct PRelu<T> {
    pub slope: Param<f64>,
    channels: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> PRelu<T> {
    pub const INIT_SLOPE: f64 = 0.25;

    pub fn new(channels: usize) -> Self {
        Self { slope: Param::filled(&[channels], Self::INIT_SLOPE), channels, cache: None }
    }

    fn layout(&self, shape: &[usize]) -> Result<usize> {
        match shape {
            [_, c, l] if *c == self.channels => Ok(*l),
            [_, _] if self.channels == 1 => Ok(usize::MAX),
            _ => Err(Error::shape(format!("prelu with {} channels got input {shape:?}", self.channels))),
        }
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let len = self.layout(x.shape())?;
        let mut y = x.clone();
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            let a = if len == usize::MAX { self.slope.value[0] } else { self.slope.value[channel_of(i, self.channels, len)] };
            *v = v.map_parts(|p| if p > 0.0 { p } else { a * p });
        }
        self.cache = Some(x);
        Ok(y)
    }

    pub fn backward(&mut self, gy: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("prelu"))?;
        if gy.shape() != x.shape() {
            return Err(Error::shape("prelu gradient shape mismatch"));
        }
        let len = self.layout(x.shape())?;
        let mut gx = gy;
        for (i, (g, xv)) in gx.data_mut().iter_mut().zip(x.data()).enumerate() {
            let ch = if len == usize::MAX { 0 } else { channel_of(i, self.channels, len) };
            let a = self.slope.value[ch];
            let (xr, xi, gr, gi) = (xv.re(), xv.im(), g.re(), g.im());
            let mut ga = 0.0;
            let gr2 = if xr > 0.0 { gr } else { ga += xr * gr; a * gr };
            let gi2 = if xi > 0.0 { gi } else { ga += xi * gi; a * gi };
            self.slope.grad[ch] += ga;
            *g = T::from_parts(gr2, gi2);
        }
        Ok(gx)
    }
}

impl<T: Scalar> Parameterized for PRelu<T> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        out.push(self.slope.view());
    }
}

/// Forward value of a parameter-free activation on one element.
pub fn activate<T: Scalar>(kind: ActivationKind, z: T) -> T {
    match kind {
        ActivationKind::Relu | ActivationKind::ComplexRelu => z.map_parts(|p| p.max(0.0)),
        ActivationKind::Hardtanh => z.map_parts(|p| p.clamp(-1.0, 1.0)),
        ActivationKind::ComplexCardioid => {
            let (x, y) = (z.re(), z.im());
            let r = x.hypot(y);
            if r == 0.0 {
                return T::zero();
            }
            z.scale(0.5 * (1.0 + x / r))
        }
        ActivationKind::ComplexPhaseTanh => {
            let r = z.norm_sqr().sqrt();
            if r == 0.0 {
                return T::zero();
            }
            z.scale(r.tanh() / r)
        }
        ActivationKind::Prelu | ActivationKind::ComplexPrelu => {
            z.map_parts(|p| if p > 0.0 { p } else { PRelu::<T>::INIT_SLOPE * p })
        }
    }
}

/// Real 2×2 Jacobian `[[∂u/∂x, ∂u/∂y], [∂v/∂x, ∂v/∂y]]` of `f(x + iy) = u + iv`.
fn jacobian(kind: ActivationKind, x: f64, y: f64) -> [[f64; 2]; 2] {
    let step = |p: f64| if p > 0.0 { 1.0 } else { 0.0 };
    match kind {
        ActivationKind::Relu | ActivationKind::ComplexRelu => [[step(x), 0.0], [0.0, step(y)]],
        ActivationKind::Hardtanh => {
            let d = |p: f64| if (-1.0..=1.0).contains(&p) { 1.0 } else { 0.0 };
            [[d(x), 0.0], [0.0, d(y)]]
        }
        ActivationKind::ComplexCardioid => {
            let r = x.hypot(y);
            if r == 0.0 {
                return [[0.5, 0.0], [0.0, 0.5]];
            }
            let r3 = r * r * r;
            [
                [0.5 + 0.5 * (2.0 * x / r - x * x * x / r3), -0.5 * x * x * y / r3],
                [0.5 * (y / r - x * x * y / r3), 0.5 + 0.5 * (x / r - x * y * y / r3)],
            ]
        }
        ActivationKind::ComplexPhaseTanh => {
            let r = x.hypot(y);
            if r < 1e-8 {
                return [[1.0, 0.0], [0.0, 1.0]];
            }
            let t = r.tanh();
            let g = t / r;
            // d/dr (tanh r / r)
            let dg = ((1.0 - t * t) * r - t) / (r * r);
            [[g + x * x * dg / r, x * y * dg / r], [x * y * dg / r, g + y * y * dg / r]]
        }
        ActivationKind::Prelu | ActivationKind::ComplexPrelu => {
            let a = PRelu::<f64>::INIT_SLOPE;
            let d = |p: f64| if p > 0.0 { 1.0 } else { a };
            [[d(x), 0.0], [0.0, d(y)]]
        }
    }
}

/// Backpropagates `g` (packed `∂L/∂u + i∂L/∂v`) through the activation at `z`.
pub fn activate_grad<T: Scalar>(kind: ActivationKind, z: T, g: T) -> T {
    let j = jacobian(kind, z.re(), z.im());
    let (gu, gv) = (g.re(), g.im());
    if T::IS_COMPLEX {
        T::from_parts(gu * j[0][0] + gv * j[1][0], gu * j[0][1] + gv * j[1][1])
    } else {
        T::from_parts(gu * j[0][0], 0.0)
    }
}

/// Elementwise activation layer; learnable kinds wrap [`PRelu`].
#[derive(Debug, Clone)]
pub enum Activation<T> {
    Fixed { kind: ActivationKind, cache: Option<Tensor<T>> },
    PRelu(PRelu<T>),
}

impl<T: Scalar> Activation<T> {
    pub fn new(kind: ActivationKind, channels: usize) -> Self {
        match kind {
            ActivationKind::Prelu | ActivationKind::ComplexPrelu => Activation::PRelu(PRelu::new(channels)),
            _ => Activation::Fixed { kind, cache: None },
        }
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::PRelu(p) => p.forward(x),
            Activation::Fixed { kind, cache } => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = activate(*kind, *v));
                *cache = Some(x);
                Ok(y)
            }
        }
    }

    pub fn backward(&mut self, gy: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::PRelu(p) => p.backward(gy),
            Activation::Fixed { kind, cache } => {
                let x = cache.as_ref().ok_or_else(|| missing_cache("activation"))?;
                if x.shape() != gy.shape() {
                    return Err(Error::shape("activation gradient shape mismatch"));
                }
                let mut g = gy;
                for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
                    *gv = activate_grad(*kind, *xv, *gv);
                }
                Ok(g)
            }
        }
    }
}

impl<T: Scalar> Parameterized for Activation<T> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        if let Activation::PRelu(p) = self {
            p.collect_params(out);
        }
    }
}

/// Logistic sigmoid applied to each real component.
#[derive(Debug, Clone, Default)]
pub struct Sigmoid<T> {
    cache: Option<Tensor<T>>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let mut y = x;
        y.data_mut().iter_mut().for_each(|v| *v = v.map_parts(sigmoid));
        self.cache = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, gy: Tensor<T>) -> Result<Tensor<T>> {
        let y = self.cache.as_ref().ok_or_else(|| missing_cache("sigmoid"))?;
        let mut g = gy;
        for (gv, yv) in g.data_mut().iter_mut().zip(y.data()) {
            let (sr, si) = (yv.re(), yv.im());
            *gv = T::from_parts(gv.re() * sr * (1.0 - sr), gv.im() * si * (1.0 - si));
        }
        Ok(g)
    }
}

/// Channelwise layer normalization on `[batch, channels, len]`: each time
/// step is normalized across channels, then scaled and shifted per channel.
/// Complex inputs subtract the complex mean and divide by the RMS modulus.
#[derive(Debug, Clone)]
pub struct ChannelNorm<T> {
    pub gain: Param<T>,
    pub shift: Param<T>,
    channels: usize,
    cache: Option<NormCache<T>>,
}

#[derive(Debug, Clone)]
struct NormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<f64>,
}

impl<T: Scalar> ChannelNorm<T> {
    pub const EPS: f64 = 1e-8;

    pub fn new(channels: usize) -> Self {
        Self {
            gain: Param::filled(&[channels], T::one()),
            shift: Param::filled(&[channels], T::zero()),
            channels,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, l) = x.dims3()?;
        if c != self.channels {
            return Err(Error::shape(format!("norm expects {} channels, got {c}", self.channels)));
        }
        let xd = x.data();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut y = vec![T::zero(); xd.len()];
        let mut inv_std = vec![0.0; b * l];
        let inv_c = 1.0 / c as f64;
        for bi in 0..b {
            let base = bi * c * l;
            for t in 0..l {
                let mut mean = T::zero();
                for ci in 0..c {
                    mean += xd[base + ci * l + t];
                }
                mean = mean.scale(inv_c);
                let mut var = 0.0;
                for ci in 0..c {
                    var += (xd[base + ci * l + t] - mean).norm_sqr();
                }
                let is = 1.0 / (var * inv_c + Self::EPS).sqrt();
                inv_std[bi * l + t] = is;
                for ci in 0..c {
                    let i = base + ci * l + t;
                    let h = (xd[i] - mean).scale(is);
                    xhat[i] = h;
                    y[i] = self.gain.value[ci] * h + self.shift.value[ci];
                }
            }
        }
        self.cache = Some(NormCache { xhat: Tensor::from_vec(&[b, c, l], xhat)?, inv_std });
        Tensor::from_vec(&[b, c, l], y)
    }

    pub fn backward(&mut self, gy: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("channel_norm"))?;
        let (b, c, l) = cache.xhat.dims3()?;
        if gy.shape() != [b, c, l] {
            return Err(Error::shape("norm gradient shape mismatch"));
        }
        let g = gy.data();
        let xh = cache.xhat.data();
        let mut gx = vec![T::zero(); g.len()];
        let inv_c = 1.0 / c as f64;
        let mut gh = vec![T::zero(); c];
        for bi in 0..b {
            let base = bi * c * l;
            for t in 0..l {
                let mut proj = 0.0;
                let mut mean_gh = T::zero();
                for ci in 0..c {
                    let i = base + ci * l + t;
                    self.gain.grad[ci] += g[i] * xh[i].conj();
                    self.shift.grad[ci] += g[i];
                    gh[ci] = g[i] * self.gain.value[ci].conj();
                    proj += gh[ci].re_dot(xh[i]);
                    mean_gh += gh[ci];
                }
                proj *= inv_c;
                mean_gh = mean_gh.scale(inv_c);
                let is = cache.inv_std[bi * l + t];
                // g_u = (g_x̂ − x̂·mean Re(conj(g_x̂)·x̂)) / s, then remove the mean.
                // The mean of x̂ is zero, so the centering only subtracts mean(g_x̂).
                for ci in 0..c {
                    let i = base + ci * l + t;
                    gx[i] = (gh[ci] - mean_gh - xh[i].scale(proj)).scale(is);
                }
            }
        }
        Tensor::from_vec(&[b, c, l], gx)
    }
}

impl<T: Scalar> Parameterized for ChannelNorm<T> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        out.push(self.gain.view());
        out.push(self.shift.view());
    }
}
