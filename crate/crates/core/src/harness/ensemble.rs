//! Seed ensembles: training, averaged prediction and scoring.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{AnyModel, ModelSpec};
use crate::dataset::{LabeledExample, Split};
use crate::error::{Error, Result};
use crate::metrics::{ensemble_stats, rescaled_mse, scaled_r2, MetricReport};
use crate::signal::ComplexSeries;
use crate::train::{predict_all, History};

/// The five seeds used when a configuration names none.
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone)]
pub struct Member {
    pub seed: u64,
    pub model: AnyModel,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberFailure {
    pub seed: u64,
    pub error: String,
}

/// Scores of an ensemble on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEval {
    pub member_r2: Vec<f64>,
    pub member_mse: Vec<f64>,
    /// Scores of the averaged prediction.
    pub ensemble_r2: f64,
    pub ensemble_mse: f64,
    /// Ensemble-mean R² with mean and SD of the member MSEs.
    pub report: MetricReport,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub spec: ModelSpec,
    pub members: Vec<Member>,
    pub failures: Vec<MemberFailure>,
    /// Scores on the training split's own test set.
    pub test: EnsembleEval,
}

impl EnsembleResult {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.seed).collect()
    }

    pub fn predict(&mut self, noisy: &[ComplexSeries]) -> Result<Vec<ComplexSeries>> {
        ensemble_predict(&mut self.members, noisy)
    }

    pub fn evaluate(&mut self, test: &[LabeledExample]) -> Result<EnsembleEval> {
        evaluate_members(&mut self.members, test)
    }
}

/// Trains one member per seed; failed members are recorded and skipped.
pub fn train_ensemble(spec: &ModelSpec, split: &Split, seeds: &[u64]) -> Result<EnsembleResult> {
    assemble(spec, split, seeds, |seed| spec.train(split, seed))
}

/// Like [`train_ensemble`] but members come from `obtain`, which may load
/// them from disk instead of training.
pub fn assemble(
    spec: &ModelSpec,
    split: &Split,
    seeds: &[u64],
    obtain: impl Fn(u64) -> Result<(AnyModel, History)> + Sync,
) -> Result<EnsembleResult> {
    spec.validate()?;
    if seeds.is_empty() {
        return Err(Error::invalid("an ensemble needs at least one seed"));
    }
    let outcomes: Vec<(u64, Result<(AnyModel, History)>)> = seeds.par_iter().map(|&s| (s, obtain(s))).collect();
    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok((model, history)) => members.push(Member { seed, model, history }),
            Err(e) => {
                log::warn!("{} seed {seed} failed: {e}", spec.label());
                failures.push(MemberFailure { seed, error: e.to_string() });
            }
        }
    }
    if members.is_empty() {
        let detail = failures.iter().map(|f| format!("seed {}: {}", f.seed, f.error)).collect::<Vec<_>>().join("; ");
        return Err(Error::Numerical(format!("every ensemble member failed ({detail})")));
    }
    let test = evaluate_members(&mut members, &split.test)?;
    Ok(EnsembleResult { spec: spec.clone(), members, failures, test })
}

/// Order-independent mean: values are sorted before summation.
fn sorted_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pointwise complex mean of the given predictions.
pub fn average_predictions(per_member: &[Vec<ComplexSeries>]) -> Result<Vec<ComplexSeries>> {
    let first = per_member.first().ok_or_else(|| Error::invalid("no member predictions to average"))?;
    let k = per_member.len();
    let mut re = vec![0.0; k];
    let mut im = vec![0.0; k];
    (0..first.len())
        .map(|i| {
            let n = first[i].len();
            let mut out = Vec::with_capacity(n);
            for t in 0..n {
                for (m, preds) in per_member.iter().enumerate() {
                    let z = preds.get(i).and_then(|s| s.as_slice().get(t)).ok_or_else(|| Error::shape("member predictions differ in shape"))?;
                    re[m] = z.re;
                    im[m] = z.im;
                }
                out.push(Complex64::new(sorted_mean(&mut re), sorted_mean(&mut im)));
            }
            ComplexSeries::new(out)
        })
        .collect()
}

pub fn member_predictions(members: &mut [Member], noisy: &[ComplexSeries]) -> Result<Vec<Vec<ComplexSeries>>> {
    members.par_iter_mut().map(|m| predict_all(&mut m.model, noisy)).collect()
}

pub fn ensemble_predict(members: &mut [Member], noisy: &[ComplexSeries]) -> Result<Vec<ComplexSeries>> {
    if members.is_empty() {
        return Err(Error::invalid("an ensemble needs at least one member"));
    }
    average_predictions(&member_predictions(members, noisy)?)
}

/// R² and rescaled MSE of one prediction set.
pub fn score(test: &[LabeledExample], preds: &[ComplexSeries]) -> Result<(f64, f64)> {
    let clean: Vec<ComplexSeries> = test.iter().map(|e| e.clean.clone()).collect();
    let amps: Vec<f64> = test.iter().map(|e| e.params.amplitude).collect();
    Ok((scaled_r2(&clean, preds)?, rescaled_mse(&clean, preds, &amps)?))
}

pub fn evaluate_members(members: &mut [Member], test: &[LabeledExample]) -> Result<EnsembleEval> {
    let noisy: Vec<ComplexSeries> = test.iter().map(|e| e.noisy.clone()).collect();
    let preds = member_predictions(members, &noisy)?;
    let mut member_r2 = Vec::with_capacity(preds.len());
    let mut member_mse = Vec::with_capacity(preds.len());
    for p in &preds {
        let (r2, mse) = score(test, p)?;
        member_r2.push(r2);
        member_mse.push(mse);
    }
    let (ensemble_r2, ensemble_mse) = score(test, &average_predictions(&preds)?)?;
    let (mean, sd) = ensemble_stats(&member_mse)?;
    let report = MetricReport {
        scaled_r2: ensemble_r2,
        rescaled_mse_mean: mean,
        rescaled_mse_sd: sd,
        n_examples: test.len(),
        n_members: members.len(),
    };
    Ok(EnsembleEval { member_r2, member_mse, ensemble_r2, ensemble_mse, report })
}
