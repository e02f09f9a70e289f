use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Activation, ChannelNorm, Conv1d, ConvGeometry, ConvTranspose1d, Linear, Sigmoid};
use super::loss::loss_eval;
use super::param::{ParamView, Parameterized};
use super::{ActivationKind, LossKind, Scalar, Tensor};
use crate::error::{Error, Result};

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares backward() against central differences on every real parameter
/// component and returns the largest relative error.
///
/// `eval(model, backward)` must run a forward pass and return the loss; when
/// `backward` is true it must also accumulate gradients.
pub fn grad_check<M, F>(model: &mut M, eps: f64, mut eval: F) -> Result<f64>
where
    M: Parameterized + ?Sized,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    model.zero_grad();
    eval(model, true)?;
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.to_vec()).collect();
    let mut worst = 0.0f64;
    for (pi, grads) in analytic.iter().enumerate() {
        for (ci, &a) in grads.iter().enumerate() {
            let orig = model.params()[pi].value[ci];
            model.params()[pi].value[ci] = orig + eps;
            let up = eval(model, false)?;
            model.params()[pi].value[ci] = orig - eps;
            let down = eval(model, false)?;
            model.params()[pi].value[ci] = orig;
            worst = worst.max(relative_error(a, (up - down) / (2.0 * eps)));
        }
    }
    Ok(worst)
}

/// Outcome of checking one (activation, loss) pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub activation: ActivationKind,
    pub loss: LossKind,
    pub configs: usize,
    pub max_rel_error: f64,
}

/// A fragment exercising every layer type:
/// conv → activation → channel norm → depthwise conv → sigmoid →
/// transposed conv → linear.
#[derive(Debug, Clone)]
struct Chain<T> {
    conv: Conv1d<T>,
    act: Activation<T>,
    norm: ChannelNorm<T>,
    dw: Conv1d<T>,
    sig: Sigmoid<T>,
    up: ConvTranspose1d<T>,
    head: Linear<T>,
    kind: ActivationKind,
    pre: Option<Tensor<T>>,
}

impl<T: Scalar> Chain<T> {
    fn new(kind: ActivationKind, in_ch: usize, len: usize, out_len: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let hidden = 3;
        let stride = rng.random_range(1..=2);
        let dil = rng.random_range(1..=2);
        let conv = Conv1d::new(in_ch, hidden, ConvGeometry::new(3, stride, dil, dil)?, true, rng);
        let mid = conv.geometry().out_len(len)?;
        let up = ConvTranspose1d::new(hidden, 1, ConvGeometry::new(4, 2, 1, 1)?, true, rng);
        let up_len = up.out_len(mid)?;
        let mut act = Activation::new(kind, hidden);
        if let Activation::PRelu(p) = &mut act {
            // Distinct slopes per channel exercise the per-channel gradient.
            for (i, s) in p.slope.value.iter_mut().enumerate() {
                *s = 0.1 + 0.2 * i as f64;
            }
        }
        let mut norm = ChannelNorm::new(hidden);
        for g in norm.gain.value.iter_mut().chain(norm.shift.value.iter_mut()) {
            *g = T::from_parts(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5));
        }
        Ok(Self {
            conv,
            act,
            norm,
            dw: Conv1d::depthwise(hidden, ConvGeometry::new(3, 1, 2, 2)?, true, rng),
            sig: Sigmoid::new(),
            up,
            head: Linear::new(up_len, out_len, rng),
            kind,
            pre: None,
        })
    }

    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let h = self.conv.forward(x)?;
        self.pre = Some(h.clone());
        let h = self.act.forward(h)?;
        let h = self.norm.forward(h)?;
        let h = self.dw.forward(h)?;
        let h = self.sig.forward(h)?;
        let h = self.up.forward(h)?;
        let (b, _, l) = h.dims3()?;
        self.head.forward(h.reshape(&[b, l])?)
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<()> {
        let g = self.head.backward(g)?;
        let (b, l) = g.dims2()?;
        let g = self.up.backward(g.reshape(&[b, 1, l])?)?;
        let g = self.sig.backward(g)?;
        let g = self.dw.backward(g)?;
        let g = self.norm.backward(g)?;
        let g = self.act.backward(g)?;
        self.conv.backward(g)?;
        Ok(())
    }

    /// True when a pre-activation sits within `margin` of a kink.
    fn near_kink(&self, margin: f64) -> bool {
        let Some(pre) = &self.pre else { return true };
        pre.data().iter().any(|z| {
            let parts = [z.re(), z.im()];
            match self.kind {
                ActivationKind::Hardtanh => parts.iter().any(|p| (p.abs() - 1.0).abs() < margin),
                ActivationKind::ComplexCardioid | ActivationKind::ComplexPhaseTanh => z.norm_sqr().sqrt() < margin,
                _ => parts[..if T::IS_COMPLEX { 2 } else { 1 }].iter().any(|p| p.abs() < margin),
            }
        })
    }
}

impl<T: Scalar> Parameterized for Chain<T> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        self.conv.collect_params(out);
        self.act.collect_params(out);
        self.norm.collect_params(out);
        self.dw.collect_params(out);
        self.up.collect_params(out);
        self.head.collect_params(out);
    }
}

fn to_complex<T: Scalar>(v: &[T]) -> Vec<Complex64> {
    v.iter().map(|z| Complex64::new(z.re(), z.im())).collect()
}

fn check_pair<T: Scalar>(kind: ActivationKind, loss: LossKind, rng: &mut ChaCha8Rng) -> Result<f64> {
    const MARGIN: f64 = 1e-3;
    for _ in 0..100 {
        let (b, c, len, n) = (rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(6..=9), 3);
        let mut chain = Chain::<T>::new(kind, c, len, n, rng)?;
        let mut draw = |k: usize| -> Vec<T> {
            (0..k).map(|_| T::from_parts(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
        };
        let x = Tensor::from_vec(&[b, c, len], draw(b * c * len))?;
        let target: Vec<Complex64> = to_complex(&draw(b * n));
        let y = chain.forward(x.clone())?;
        let resid_kink = loss == LossKind::L1
            && to_complex(y.data()).iter().zip(&target).any(|(p, t)| {
                let d = p - t;
                d.re.abs() < MARGIN || (T::IS_COMPLEX && d.im.abs() < MARGIN)
            });
        if chain.near_kink(MARGIN) || resid_kink {
            continue;
        }
        return grad_check(&mut chain, 1e-5, |m, back| {
            let y = m.forward(x.clone())?;
            let (v, g) = loss_eval(loss, &to_complex(y.data()), &target, n)?;
            if back {
                let g: Vec<T> = g.iter().map(|z| T::from_parts(z.re, z.im)).collect();
                m.backward(Tensor::from_vec(y.shape(), g)?)?;
            }
            Ok(v)
        });
    }
    Err(Error::Numerical(format!("no kink-free configuration found for {kind}")))
}

/// Grad-checks every (activation, loss) pairing on `configs` random
/// fragments. Complex activations run on complex fragments, real ones on real
/// fragments.
pub fn run_suite(configs: usize, seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    for (ai, &activation) in ActivationKind::ALL.iter().enumerate() {
        for (li, &loss) in LossKind::ALL.iter().enumerate() {
            let mut rng = crate::signal::stream_rng(seed, ai as u64, li as u64);
            let mut worst = 0.0f64;
            for _ in 0..configs {
                let e = if activation.is_complex() {
                    check_pair::<Complex64>(activation, loss, &mut rng)?
                } else {
                    check_pair::<f64>(activation, loss, &mut rng)?
                };
                worst = worst.max(e);
            }
            out.push(SuiteEntry { activation, loss, configs, max_rel_error: worst });
        }
    }
    Ok(out)
}
