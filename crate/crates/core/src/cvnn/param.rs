use rand::Rng;

use super::Scalar;

/// A learnable parameter with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub shape: Vec<usize>,
}

impl<T: Scalar> Param<T> {
    pub fn new(shape: &[usize], value: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![T::zero(); value.len()];
        Self { value, grad, shape: shape.to_vec() }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        Self::new(shape, vec![v; shape.iter().product()])
    }

    /// Glorot-uniform initialization. Complex entries draw both parts from
    /// the range scaled by `1/√2`, so `E|w|²` matches the real case.
    pub fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let mut limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        if T::IS_COMPLEX {
            limit /= std::f64::consts::SQRT_2;
        }
        let n = shape.iter().product();
        let value = (0..n)
            .map(|_| {
                let re = rng.random_range(-limit..limit);
                let im = if T::IS_COMPLEX { rng.random_range(-limit..limit) } else { 0.0 };
                T::from_parts(re, im)
            })
            .collect();
        Self::new(shape, value)
    }

    pub fn view(&mut self) -> ParamView<'_> {
        ParamView {
            value: T::as_reals_mut(&mut self.value),
            grad: T::as_reals_mut(&mut self.grad),
            shape: &self.shape,
            complex: T::IS_COMPLEX,
        }
    }
}

/// Real-component view of one parameter: a complex parameter of `n`
/// entries contributes `2n` interleaved real components.
#[derive(Debug)]
pub struct ParamView<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
    pub shape: &'a [usize],
    pub complex: bool,
}

/// Anything that owns learnable parameters.
pub trait Parameterized {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>);

    fn params(&mut self) -> Vec<ParamView<'_>> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn zero_grad(&mut self) {
        for p in self.params() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Number of real components across all parameters.
    fn real_param_count(&mut self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    fn snapshot(&mut self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| p.value.to_vec()).collect()
    }

    fn restore(&mut self, snap: &[Vec<f64>]) {
        let params = self.params();
        assert_eq!(params.len(), snap.len(), "snapshot does not match the model");
        for (p, s) in params.into_iter().zip(snap) {
            p.value.copy_from_slice(s);
        }
    }

    /// Rounds every parameter to `f32` precision, the checkpoint precision.
    fn quantize_f32(&mut self) {
        for p in self.params() {
            p.value.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}
