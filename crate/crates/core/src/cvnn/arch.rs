use num_complex::Complex64;

use super::param::{ParamView, Parameterized};
use super::{ArchMode, Scalar, Tensor};
use crate::error::{Error, Result};

/// A network on `[batch, channels, len]` tensors.
///
/// Complex outputs of `k` sources come back as `[batch, k, len']` from a
/// complex or single-channel real network, and as `[batch, 2k, len']`
/// (re, im interleaved per source) from a two-channel real network.
pub trait CoreNet<T: Scalar>: Parameterized + Clone + Send {
    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>>;
    fn backward(&mut self, grad: Tensor<T>) -> Result<()>;
}

/// One of the four ways to feed complex data to a network.
#[derive(Debug, Clone)]
pub enum Wired<C, R> {
    /// Complex network on the complex input.
    ComplexNet(C),
    /// One real network applied to the real parts and to the imaginary parts.
    DualReal1(R),
    /// Separate real networks for the real and imaginary parts.
    DualReal2(R, R),
    /// One real network on the real and imaginary parts stacked as channels.
    DualReal1C(R),
}

fn split_parts(x: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (x.iter().map(|z| z.re).collect(), x.iter().map(|z| z.im).collect())
}

impl<C: CoreNet<Complex64>, R: CoreNet<f64>> Wired<C, R> {
    pub fn mode(&self) -> ArchMode {
        match self {
            Wired::ComplexNet(_) => ArchMode::ComplexNet,
            Wired::DualReal1(_) => ArchMode::DualReal1,
            Wired::DualReal2(..) => ArchMode::DualReal2,
            Wired::DualReal1C(_) => ArchMode::DualReal1C,
        }
    }

    /// Maps `[batch, len]` complex signals to `[batch, sources, len']`.
    pub fn forward(&mut self, x: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
        let (b, n) = x.dims2()?;
        match self {
            Wired::ComplexNet(net) => {
                let y = net.forward(x.clone().reshape(&[b, 1, n])?)?;
                y.dims3()?;
                Ok(y)
            }
            Wired::DualReal1(net) => {
                let (mut re, im) = split_parts(x.data());
                re.extend(im);
                let y = net.forward(Tensor::from_vec(&[2 * b, 1, n], re)?)?;
                let (b2, k, m) = y.dims3()?;
                if b2 != 2 * b {
                    return Err(Error::shape("dual-real network changed the batch size"));
                }
                let half = b * k * m;
                let (yr, yi) = y.data().split_at(half);
                let out = yr.iter().zip(yi).map(|(r, i)| Complex64::new(*r, *i)).collect();
                Tensor::from_vec(&[b, k, m], out)
            }
            Wired::DualReal2(net_re, net_im) => {
                let (re, im) = split_parts(x.data());
                let yr = net_re.forward(Tensor::from_vec(&[b, 1, n], re)?)?;
                let yi = net_im.forward(Tensor::from_vec(&[b, 1, n], im)?)?;
                if yr.shape() != yi.shape() {
                    return Err(Error::shape("dual-real networks disagree on the output shape"));
                }
                let (_, k, m) = yr.dims3()?;
                let out = yr.data().iter().zip(yi.data()).map(|(r, i)| Complex64::new(*r, *i)).collect();
                Tensor::from_vec(&[b, k, m], out)
            }
            Wired::DualReal1C(net) => {
                let mut stacked = Vec::with_capacity(2 * b * n);
                for row in x.data().chunks(n) {
                    stacked.extend(row.iter().map(|z| z.re));
                    stacked.extend(row.iter().map(|z| z.im));
                }
                let y = net.forward(Tensor::from_vec(&[b, 2, n], stacked)?)?;
                let (_, k2, m) = y.dims3()?;
                if k2 % 2 != 0 {
                    return Err(Error::shape("two-channel network must return an even channel count"));
                }
                let k = k2 / 2;
                let mut out = Vec::with_capacity(b * k * m);
                for chunk in y.data().chunks(2 * m) {
                    let (r, i) = chunk.split_at(m);
                    out.extend(r.iter().zip(i).map(|(r, i)| Complex64::new(*r, *i)));
                }
                Tensor::from_vec(&[b, k, m], out)
            }
        }
    }

    /// Backpropagates a packed complex gradient of the forward output.
    pub fn backward(&mut self, grad: &Tensor<Complex64>) -> Result<()> {
        let (b, k, m) = grad.dims3()?;
        match self {
            Wired::ComplexNet(net) => net.backward(grad.clone()),
            Wired::DualReal1(net) => {
                let (mut re, im) = split_parts(grad.data());
                re.extend(im);
                net.backward(Tensor::from_vec(&[2 * b, k, m], re)?)
            }
            Wired::DualReal2(net_re, net_im) => {
                let (re, im) = split_parts(grad.data());
                net_re.backward(Tensor::from_vec(&[b, k, m], re)?)?;
                net_im.backward(Tensor::from_vec(&[b, k, m], im)?)
            }
            Wired::DualReal1C(net) => {
                let mut stacked = Vec::with_capacity(2 * grad.len());
                for row in grad.data().chunks(m) {
                    stacked.extend(row.iter().map(|z| z.re));
                    stacked.extend(row.iter().map(|z| z.im));
                }
                net.backward(Tensor::from_vec(&[b, 2 * k, m], stacked)?)
            }
        }
    }
}

impl<C: Parameterized, R: Parameterized> Parameterized for Wired<C, R> {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        match self {
            Wired::ComplexNet(c) => c.collect_params(out),
            Wired::DualReal1(r) | Wired::DualReal1C(r) => r.collect_params(out),
            Wired::DualReal2(a, b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvnn::{ActivationKind, Activation, Linear};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Per-channel MLP on the flattened channels.
    #[derive(Clone)]
    struct Mlp<T> {
        l1: Linear<T>,
        act: Activation<T>,
        l2: Linear<T>,
        shape: Vec<usize>,
    }

    impl<T: Scalar> Mlp<T> {
        fn new(width: usize, kind: ActivationKind, seed: u64) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Self { l1: Linear::new(width, 6, &mut rng), act: Activation::new(kind, 1), l2: Linear::new(6, width, &mut rng), shape: vec![] }
        }
    }

    impl<T: Scalar> Parameterized for Mlp<T> {
        fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
            self.l1.collect_params(out);
            self.act.collect_params(out);
            self.l2.collect_params(out);
        }
    }

    impl<T: Scalar> CoreNet<T> for Mlp<T> {
        fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
            self.shape = x.shape().to_vec();
            let (b, c, l) = x.dims3()?;
            let h = self.l1.forward(x.reshape(&[b, c * l])?)?;
            let h = self.act.forward(h)?;
            self.l2.forward(h)?.reshape(&self.shape)
        }
        fn backward(&mut self, g: Tensor<T>) -> Result<()> {
            let (b, c, l) = g.dims3()?;
            let g = self.l2.backward(g.reshape(&[b, c * l])?)?;
            let g = self.act.backward(g)?;
            self.l1.backward(g)?;
            Ok(())
        }
    }

    fn input(b: usize, n: usize, im_zero: bool) -> Tensor<Complex64> {
        let data = (0..b * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), if im_zero { 0.0 } else { (i as f64 * 0.11).cos() }))
            .collect();
        Tensor::from_vec(&[b, n], data).unwrap()
    }

    type Net = Wired<Mlp<Complex64>, Mlp<f64>>;

    #[test]
    fn dual_real1_zero_imag_gives_constant_imag() {
        let mut w: Net = Wired::DualReal1(Mlp::new(5, ActivationKind::Relu, 1));
        let y1 = w.forward(&input(3, 5, true)).unwrap();
        let zeros = w.forward(&Tensor::zeros(&[1, 5])).unwrap();
        for row in y1.data().chunks(5) {
            for (a, z) in row.iter().zip(zeros.data()) {
                assert_eq!(a.im, z.re);
            }
        }
    }

    #[test]
    fn dual_real1_swap_swaps_output() {
        let mut w: Net = Wired::DualReal1(Mlp::new(5, ActivationKind::Relu, 2));
        let x = input(2, 5, false);
        let swapped =
            Tensor::from_vec(&[2, 5], x.data().iter().map(|z| Complex64::new(z.im, z.re)).collect()).unwrap();
        let y = w.forward(&x).unwrap();
        let ys = w.forward(&swapped).unwrap();
        for (a, b) in y.data().iter().zip(ys.data()) {
            assert_eq!(a.re, b.im);
            assert_eq!(a.im, b.re);
        }
    }

    #[test]
    fn output_shape_matches_input_all_modes() {
        let nets: Vec<Net> = vec![
            Wired::ComplexNet(Mlp::new(5, ActivationKind::ComplexRelu, 3)),
            Wired::DualReal1(Mlp::new(5, ActivationKind::Relu, 3)),
            Wired::DualReal2(Mlp::new(5, ActivationKind::Relu, 3), Mlp::new(5, ActivationKind::Relu, 4)),
            Wired::DualReal1C(Mlp::new(10, ActivationKind::Relu, 3)),
        ];
        for mut w in nets {
            let y = w.forward(&input(4, 5, false)).unwrap();
            assert_eq!(y.shape(), &[4, 1, 5], "{}", w.mode());
        }
    }

    #[test]
    fn wired_gradients_pass_grad_check() {
        use crate::cvnn::{grad_check, loss_eval, LossKind};
        let nets: Vec<Net> = vec![
            Wired::ComplexNet(Mlp::new(4, ActivationKind::ComplexCardioid, 5)),
            Wired::DualReal1(Mlp::new(4, ActivationKind::Hardtanh, 5)),
            Wired::DualReal2(Mlp::new(4, ActivationKind::Prelu, 5), Mlp::new(4, ActivationKind::Prelu, 6)),
            Wired::DualReal1C(Mlp::new(8, ActivationKind::Prelu, 5)),
        ];
        let x = input(3, 4, false);
        let target = input(3, 4, true);
        for mut w in nets {
            let err = grad_check(&mut w, 1e-5, |m, back| {
                let y = m.forward(&x)?;
                let (v, g) = loss_eval(LossKind::LogMse, y.data(), target.data(), 4)?;
                if back {
                    m.backward(&Tensor::from_vec(y.shape(), g)?)?;
                }
                Ok(v)
            })
            .unwrap();
            assert!(err < 1e-4, "{}: {err}", w.mode());
        }
    }
}
