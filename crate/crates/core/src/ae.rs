//! Undercomplete denoising autoencoder: 1024 → 10 → 5 → 10 → 1024 per
//! component, in any of the four wiring modes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cvnn::{
    ActivationKind, Activation, ArchMode, CoreNet, Linear, LossKind, ParamView, Parameterized, Scalar, Tensor, Wired,
};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::signal::{stream_rng, ComplexSeries, TimeGrid};
use crate::train::{fit, predict_all, History, TrainConfig, Trainable};

pub const HIDDEN: usize = 10;
pub const LATENT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeSpec {
    pub mode: ArchMode,
    pub activation: ActivationKind,
    pub loss: LossKind,
    /// Samples per signal.
    pub signal_len: usize,
}

impl AeSpec {
    /// ReLU-family activation and MSE-family loss matched to the mode.
    pub fn new(mode: ArchMode) -> Self {
        let (activation, loss) = if mode.is_complex() {
            (ActivationKind::ComplexRelu, LossKind::ComplexMse)
        } else {
            (ActivationKind::Relu, LossKind::Mse)
        };
        Self { mode, activation, loss, signal_len: TimeGrid::DEFAULT_SAMPLES }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.activation.compatible_with(self.mode) {
            return Err(Error::invalid(format!("activation {} cannot be used in {} mode", self.activation, self.mode)));
        }
        if self.signal_len == 0 {
            return Err(Error::invalid("signal length must be positive"));
        }
        Ok(())
    }

    /// Input (and output) width of the core network.
    pub fn outer_width(&self) -> usize {
        self.signal_len * self.mode.core_channels()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeTrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self { lr: 0.01, max_epochs: 1000, patience: 5, seed: 0 }
    }
}

/// Fully connected core with activations after every layer but the last.
#[derive(Debug, Clone)]
pub struct AeNet<T> {
    layers: Vec<Linear<T>>,
    acts: Vec<Activation<T>>,
    in_shape: Vec<usize>,
}

impl<T: Scalar> AeNet<T> {
    fn new(width: usize, activation: ActivationKind, seed: u64, stream: u64) -> Self {
        let mut rng = stream_rng(seed, stream, 0);
        let dims = [width, HIDDEN, LATENT, HIDDEN, width];
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], &mut rng)).collect::<Vec<_>>();
        let acts = (0..layers.len() - 1).map(|_| Activation::new(activation, 1)).collect();
        Self { layers, acts, in_shape: Vec::new() }
    }
}

impl<T: Scalar> Parameterized for AeNet<T> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        let mut acts = self.acts.iter_mut();
        for layer in &mut self.layers {
            layer.collect_params(out);
            if let Some(a) = acts.next() {
                a.collect_params(out);
            }
        }
    }
}

impl<T: Scalar> CoreNet<T> for AeNet<T> {
    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        self.in_shape = x.shape().to_vec();
        let (b, c, l) = x.dims3()?;
        let mut h = x.reshape(&[b, c * l])?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            h = layer.forward(h)?;
            if i < last {
                h = self.acts[i].forward(h)?;
            }
        }
        h.reshape(&self.in_shape)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<()> {
        let (b, c, l) = grad.dims3()?;
        let mut g = grad.reshape(&[b, c * l])?;
        let last = self.layers.len() - 1;
        for i in (0..=last).rev() {
            if i < last {
                g = self.acts[i].backward(g)?;
            }
            g = self.layers[i].backward(g)?;
        }
        Ok(())
    }
}

/// An autoencoder together with the spec it was built from.
#[derive(Debug, Clone)]
pub struct AeModel {
    pub spec: AeSpec,
    pub net: Wired<AeNet<Complex64>, AeNet<f64>>,
}

pub fn build_ae(spec: &AeSpec, seed: u64) -> Result<AeModel> {
    spec.validate()?;
    let w = spec.outer_width();
    let act = spec.activation;
    let net = match spec.mode {
        ArchMode::ComplexNet => Wired::ComplexNet(AeNet::new(w, act, seed, 0)),
        ArchMode::DualReal1 => Wired::DualReal1(AeNet::new(w, act, seed, 0)),
        ArchMode::DualReal2 => Wired::DualReal2(AeNet::new(w, act, seed, 0), AeNet::new(w, act, seed, 1)),
        ArchMode::DualReal1C => Wired::DualReal1C(AeNet::new(w, act, seed, 0)),
    };
    Ok(AeModel { spec: spec.clone(), net })
}

impl Parameterized for AeModel {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        self.net.collect_params(out);
    }
}

impl Trainable for AeModel {
    fn predict(&mut self, noisy: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
        let (b, n) = noisy.dims2()?;
        if n != self.spec.signal_len {
            return Err(Error::shape(format!("autoencoder expects {} samples, got {n}", self.spec.signal_len)));
        }
        self.net.forward(noisy)?.reshape(&[b, n])
    }

    fn backprop(&mut self, grad: &Tensor<Complex64>) -> Result<()> {
        let (b, n) = grad.dims2()?;
        self.net.backward(&grad.clone().reshape(&[b, 1, n])?)
    }
}

/// Full-batch Adam with early stopping; returns the best-validation model.
pub fn train_ae(mut model: AeModel, split: &Split, cfg: &AeTrainConfig) -> Result<(AeModel, History)> {
    let tc = TrainConfig {
        lr: cfg.lr,
        max_epochs: cfg.max_epochs,
        batch_size: None,
        patience: Some(cfg.patience),
        loss: model.spec.loss,
        seed: cfg.seed,
    };
    let history = fit(&mut model, &split.train, &split.val, &tc)?;
    model.quantize_f32();
    Ok((model, history))
}

pub fn ae_denoise(model: &mut AeModel, noisy: &ComplexSeries) -> Result<ComplexSeries> {
    noisy.check_len(model.spec.signal_len)?;
    Ok(predict_all(model, std::slice::from_ref(noisy))?.remove(0))
}
