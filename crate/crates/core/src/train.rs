//! Minibatch Adam training with best-validation snapshots, shared by the
//! autoencoder and the ConvTasNet.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cvnn::{loss_eval, Adam, LossKind, Parameterized, Tensor};
use crate::dataset::LabeledExample;
use crate::error::{Error, Result};
use crate::signal::{stream_rng, ComplexSeries};

/// Examples per forward pass when only evaluating.
pub const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// `None` trains on the full set in a single step per epoch.
    pub batch_size: Option<usize>,
    /// Stop after this many consecutive validation-loss increases.
    pub patience: Option<usize>,
    pub loss: LossKind,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if self.batch_size == Some(0) || self.patience == Some(0) {
            return Err(Error::invalid("batch size and patience must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Mean training loss of each epoch's steps.
    pub train_loss: Vec<f64>,
    /// Validation loss after each epoch.
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss.get(self.best_epoch).copied().unwrap_or(f64::NAN)
    }
}

/// Counts consecutive increases of a monitored value.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    patience: usize,
    last: Option<f64>,
    increases: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        Self { patience, last: None, increases: 0 }
    }

    /// Records a value; true once `patience` consecutive increases were seen.
    pub fn observe(&mut self, value: f64) -> bool {
        if let Some(prev) = self.last {
            if value > prev {
                self.increases += 1;
            } else {
                self.increases = 0;
            }
        }
        self.last = Some(value);
        self.increases >= self.patience
    }
}

/// A denoising network trained on complex `[batch, len]` signals.
pub trait Trainable: Parameterized {
    /// Forward pass returning the signal estimate `[batch, len]`.
    fn predict(&mut self, noisy: &Tensor<Complex64>) -> Result<Tensor<Complex64>>;
    /// Backpropagates the gradient of the last [`Trainable::predict`] output.
    fn backprop(&mut self, grad: &Tensor<Complex64>) -> Result<()>;
}

pub fn stack(series: &[&ComplexSeries]) -> Result<Tensor<Complex64>> {
    let n = series.first().map_or(0, |s| s.len());
    let mut data = Vec::with_capacity(series.len() * n);
    for s in series {
        s.check_len(n)?;
        data.extend_from_slice(s.as_slice());
    }
    Tensor::from_vec(&[series.len(), n], data)
}

pub fn unstack(t: &Tensor<Complex64>) -> Result<Vec<ComplexSeries>> {
    let (_, n) = t.dims2()?;
    t.data().chunks(n).map(|c| ComplexSeries::new(c.to_vec())).collect()
}

/// Runs the model over `noisy` in chunks of [`EVAL_CHUNK`].
pub fn predict_all<M: Trainable + ?Sized>(model: &mut M, noisy: &[ComplexSeries]) -> Result<Vec<ComplexSeries>> {
    let mut out = Vec::with_capacity(noisy.len());
    for chunk in noisy.chunks(EVAL_CHUNK) {
        let refs: Vec<&ComplexSeries> = chunk.iter().collect();
        out.extend(unstack(&model.predict(&stack(&refs)?)?)?);
    }
    Ok(out)
}

/// Mean loss over a set, evaluated in chunks.
pub fn evaluate_loss<M: Trainable + ?Sized>(model: &mut M, set: &[LabeledExample], loss: LossKind) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    let mut total = 0.0;
    for chunk in set.chunks(EVAL_CHUNK) {
        let (noisy, clean) = batch(chunk.iter())?;
        let pred = model.predict(&noisy)?;
        let (v, _) = loss_eval(loss, pred.data(), clean.data(), clean.dims2()?.1)?;
        total += v * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

fn batch<'a>(examples: impl Iterator<Item = &'a LabeledExample> + Clone) -> Result<(Tensor<Complex64>, Tensor<Complex64>)> {
    let noisy: Vec<&ComplexSeries> = examples.clone().map(|e| &e.noisy).collect();
    let clean: Vec<&ComplexSeries> = examples.map(|e| &e.clean).collect();
    Ok((stack(&noisy)?, stack(&clean)?))
}

/// Trains with Adam and leaves the model at its best-validation snapshot.
pub fn fit<M: Trainable + ?Sized>(
    model: &mut M,
    train: &[LabeledExample],
    val: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    let mut opt = Adam::new(cfg.lr)?;
    let mut history = History::default();
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut stopper = cfg.patience.map(EarlyStop::new);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch_size = cfg.batch_size.unwrap_or(train.len()).min(train.len());
    let full = full_batch(train, batch_size)?;
    for epoch in 0..cfg.max_epochs {
        if batch_size < train.len() {
            order.sort_unstable();
            order.shuffle(&mut stream_rng(cfg.seed, u64::MAX - 1, epoch as u64));
        }
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for idx in order.chunks(batch_size) {
            let owned;
            let (noisy, clean) = match &full {
                Some(pair) => pair,
                None => {
                    owned = batch(idx.iter().map(|&i| &train[i]))?;
                    &owned
                }
            };
            model.zero_grad();
            let pred = model.predict(noisy)?;
            let (value, grad) = loss_eval(cfg.loss, pred.data(), clean.data(), clean.dims2()?.1)
                .map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
            model.backprop(&Tensor::from_vec(pred.shape(), grad)?)?;
            opt.step(model.params())?;
            epoch_loss += value;
            steps += 1;
        }
        let val_loss = evaluate_loss(model, val, cfg.loss).map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
        history.train_loss.push(epoch_loss / steps as f64);
        history.val_loss.push(val_loss);
        log::debug!("epoch {epoch}: train {:.5} val {val_loss:.5}", epoch_loss / steps as f64);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.snapshot()));
            history.best_epoch = epoch;
        }
        if stopper.as_mut().is_some_and(|s| s.observe(val_loss)) {
            history.stopped_early = true;
            break;
        }
    }
    if let Some((_, snap)) = best {
        model.restore(&snap);
    }
    Ok(history)
}

fn full_batch(train: &[LabeledExample], batch_size: usize) -> Result<Option<(Tensor<Complex64>, Tensor<Complex64>)>> {
    if batch_size == train.len() {
        batch(train.iter()).map(Some)
    } else {
        Ok(None)
    }
}
