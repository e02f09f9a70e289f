use num_complex::Complex64;

use super::LossKind;
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-12;

fn check(pred: &[Complex64], target: &[Complex64], signal_len: usize) -> Result<usize> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("prediction has {} samples, target {}", pred.len(), target.len())));
    }
    if signal_len == 0 || pred.is_empty() || pred.len() % signal_len != 0 {
        return Err(Error::shape(format!("{} samples do not split into signals of {signal_len}", pred.len())));
    }
    Ok(pred.len() / signal_len)
}

/// Loss value and its gradient with respect to `pred`, packed as
/// `∂L/∂Re + i·∂L/∂Im`. Both buffers hold consecutive signals of
/// `signal_len` samples.
pub fn loss_eval(
    kind: LossKind,
    pred: &[Complex64],
    target: &[Complex64],
    signal_len: usize,
) -> Result<(f64, Vec<Complex64>)> {
    let batch = check(pred, target, signal_len)?;
    let total = pred.len() as f64;
    let mut grad = vec![Complex64::new(0.0, 0.0); pred.len()];
    let value = match kind {
        LossKind::ComplexMse | LossKind::Mse => {
            // MSE averages over 2·n real components.
            let denom = if kind == LossKind::Mse { 2.0 * total } else { total };
            let mut s = 0.0;
            for ((g, p), t) in grad.iter_mut().zip(pred).zip(target) {
                let d = p - t;
                s += d.norm_sqr();
                *g = d * (2.0 / denom);
            }
            s / denom
        }
        LossKind::L1 => {
            let denom = 2.0 * total;
            let mut s = 0.0;
            for ((g, p), t) in grad.iter_mut().zip(pred).zip(target) {
                let d = p - t;
                s += d.re.abs() + d.im.abs();
                *g = Complex64::new(sign(d.re), sign(d.im)) / denom;
            }
            s / denom
        }
        LossKind::ComplexLogMse | LossKind::LogMse | LossKind::ComplexSdr | LossKind::SnrLoss => {
            let snr = matches!(kind, LossKind::ComplexSdr | LossKind::SnrLoss);
            let db = 10.0 / std::f64::consts::LN_10;
            let mut s = 0.0;
            for b in 0..batch {
                let r = b * signal_len..(b + 1) * signal_len;
                let (p, t) = (&pred[r.clone()], &target[r.clone()]);
                let err: f64 = p.iter().zip(t).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() + LOG_FLOOR;
                let coef = if snr {
                    let power: f64 = t.iter().map(|v| v.norm_sqr()).sum();
                    s += -10.0 * (power / err).log10();
                    db * 2.0 / (err * batch as f64)
                } else {
                    s += err.ln();
                    2.0 / (err * batch as f64)
                };
                for ((g, a), b) in grad[r].iter_mut().zip(p).zip(t) {
                    *g = (a - b) * coef;
                }
            }
            s / batch as f64
        }
    };
    if !value.is_finite() {
        return Err(Error::Numerical(format!("{kind} loss is not finite")));
    }
    Ok((value, grad))
}

/// Loss value only.
pub fn loss_value(kind: LossKind, pred: &[Complex64], target: &[Complex64], signal_len: usize) -> Result<f64> {
    loss_eval(kind, pred, target, signal_len).map(|(v, _)| v)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn trivial_values() {
        let y = [c(1.0, 1.0)];
        let zero = [c(0.0, 0.0)];
        assert_eq!(loss_value(LossKind::ComplexMse, &y, &y, 1).unwrap(), 0.0);
        assert_eq!(loss_value(LossKind::ComplexMse, &zero, &y, 1).unwrap(), 2.0);
        assert_eq!(loss_value(LossKind::Mse, &zero, &y, 1).unwrap(), 1.0);
        assert_eq!(loss_value(LossKind::L1, &zero, &y, 1).unwrap(), 1.0);
    }

    #[test]
    fn shape_errors() {
        let a = [c(0.0, 0.0); 4];
        assert!(loss_eval(LossKind::Mse, &a, &a[..3], 2).is_err());
        assert!(loss_eval(LossKind::Mse, &a, &a, 3).is_err());
    }

    /// Per-kind formulas written out directly on the real components.
    fn oracle(kind: LossKind, p: &[Complex64], t: &[Complex64], n: usize) -> f64 {
        let reals = |v: &[Complex64]| v.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>();
        let (pr, tr) = (reals(p), reals(t));
        let sq: Vec<f64> = pr.iter().zip(&tr).map(|(a, b)| (a - b) * (a - b)).collect();
        let batch = p.len() / n;
        let per_signal = |f: &dyn Fn(usize) -> f64| (0..batch).map(f).sum::<f64>() / batch as f64;
        let err = |b: usize| sq[2 * b * n..2 * (b + 1) * n].iter().sum::<f64>() + 1e-12;
        match kind {
            LossKind::ComplexMse => sq.iter().sum::<f64>() / p.len() as f64,
            LossKind::Mse => sq.iter().sum::<f64>() / sq.len() as f64,
            LossKind::L1 => pr.iter().zip(&tr).map(|(a, b)| (a - b).abs()).sum::<f64>() / pr.len() as f64,
            LossKind::LogMse | LossKind::ComplexLogMse => per_signal(&|b| err(b).ln()),
            LossKind::SnrLoss | LossKind::ComplexSdr => per_signal(&|b| {
                let pw: f64 = tr[2 * b * n..2 * (b + 1) * n].iter().map(|v| v * v).sum();
                -10.0 * (pw / err(b)).log10()
            }),
        }
    }

    #[test]
    fn random_pairs_match_formula_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in LossKind::ALL {
            for _ in 0..5 {
                let n = rng.random_range(1..9);
                let b = rng.random_range(1..4);
                let mut draw = || c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let p: Vec<_> = (0..n * b).map(|_| draw()).collect();
                let t: Vec<_> = (0..n * b).map(|_| draw()).collect();
                let got = loss_value(kind, &p, &t, n).unwrap();
                let want = oracle(kind, &p, &t, n);
                assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{kind}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn sdr_alias_matches_snr_loss() {
        let p = [c(0.5, -0.2), c(0.1, 0.3)];
        let t = [c(1.0, 0.0), c(0.0, 1.0)];
        assert_eq!(
            loss_value(LossKind::ComplexSdr, &p, &t, 2).unwrap(),
            loss_value(LossKind::SnrLoss, &p, &t, 2).unwrap()
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in LossKind::ALL {
            let n = 4;
            let mut draw = || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let p: Vec<_> = (0..2 * n).map(|_| draw()).collect();
            let t: Vec<_> = (0..2 * n).map(|_| draw()).collect();
            let (_, g) = loss_eval(kind, &p, &t, n).unwrap();
            let eps = 1e-6;
            for i in 0..p.len() {
                for (part, ga) in [(0, g[i].re), (1, g[i].im)] {
                    let bump = |s: f64| {
                        let mut q = p.clone();
                        if part == 0 {
                            q[i].re += s;
                        } else {
                            q[i].im += s;
                        }
                        loss_value(kind, &q, &t, n).unwrap()
                    };
                    let num = (bump(eps) - bump(-eps)) / (2.0 * eps);
                    assert!((num - ga).abs() < 1e-5 * num.abs().max(1.0), "{kind} {i}: {num} vs {ga}");
                }
            }
        }
    }
}
