use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Matrix, Parameters, TensorView};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Affine layer `y = W x + b` with `W` of shape `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<F> {
    pub weights: Matrix<F>,
    pub bias: Vec<F>,
}

#[derive(Clone, Debug)]
pub struct DenseCache<F> {
    pub input: Vec<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Dense {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![F::zero(); out_dim],
        }
    }

    pub fn new(weights: Matrix<F>, bias: Vec<F>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::shape("dense bias", weights.rows(), bias.len()));
        }
        Ok(Dense { weights, bias })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(out_dim, in_dim);
        glorot_fill(layer.weights.as_mut_slice(), in_dim, out_dim, rng);
        layer
    }

    /// Lookup-table initialization for one-hot inputs: weights drawn from
    /// N(0, 1), zero bias.
    pub fn init_embedding<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(out_dim, in_dim);
        for w in layer.weights.as_mut_slice() {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            *w = F::of(z);
        }
        layer
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &[F]) -> Result<(Vec<F>, DenseCache<F>)> {
        let y = self.apply(x)?;
        Ok((y, DenseCache { input: x.to_vec() }))
    }

    /// Forward pass without a cache.
    pub fn apply(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.in_dim() {
            return Err(Error::shape("dense input", self.in_dim(), x.len()));
        }
        Ok((0..self.out_dim())
            .map(|r| dot(self.weights.row(r), x) + self.bias[r])
            .collect())
    }

    /// Column `c` of `W` plus bias; the affine map applied to a one-hot input.
    pub fn apply_one_hot(&self, c: usize) -> Result<Vec<F>> {
        if c >= self.in_dim() {
            return Err(Error::shape("one-hot index bound", self.in_dim(), c));
        }
        Ok((0..self.out_dim())
            .map(|r| self.weights[(r, c)] + self.bias[r])
            .collect())
    }

    pub fn backward(&self, cache: &DenseCache<F>, upstream: &[F]) -> Result<(Dense<F>, Vec<F>)> {
        let mut grads = self.zeros_like();
        let mut downstream = vec![F::zero(); self.in_dim()];
        self.backward_into(cache, upstream, F::one(), &mut grads, Some(&mut downstream))?;
        Ok((grads, downstream))
    }

    /// Accumulates `scale * dL/dparams` into `grads` and, when requested,
    /// adds `dL/dx` (unscaled) into `downstream`.
    pub fn backward_into(
        &self,
        cache: &DenseCache<F>,
        upstream: &[F],
        scale: F,
        grads: &mut Dense<F>,
        downstream: Option<&mut [F]>,
    ) -> Result<()> {
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        if upstream.len() != out_dim {
            return Err(Error::shape("dense upstream", out_dim, upstream.len()));
        }
        if cache.input.len() != in_dim {
            return Err(Error::Consistency(format!(
                "dense cache holds input of length {}, layer expects {in_dim}",
                cache.input.len()
            )));
        }
        if grads.out_dim() != out_dim || grads.in_dim() != in_dim {
            return Err(Error::shape(
                "dense gradient buffer",
                format!("{out_dim}x{in_dim}"),
                format!("{}x{}", grads.out_dim(), grads.in_dim()),
            ));
        }
        for r in 0..out_dim {
            let u = upstream[r] * scale;
            if u == F::zero() {
                continue;
            }
            grads.bias[r] += u;
            for (g, &x) in grads.weights.row_mut(r).iter_mut().zip(&cache.input) {
                *g += u * x;
            }
        }
        if let Some(down) = downstream {
            if down.len() != in_dim {
                return Err(Error::shape("dense downstream", in_dim, down.len()));
            }
            for r in 0..out_dim {
                let u = upstream[r];
                if u == F::zero() {
                    continue;
                }
                for (d, &w) in down.iter_mut().zip(self.weights.row(r)) {
                    *d += u * w;
                }
            }
        }
        Ok(())
    }

    /// Gradient accumulation for a one-hot input at index `c`.
    pub fn backward_one_hot_into(&self, c: usize, upstream: &[F], scale: F, grads: &mut Dense<F>) {
        for (r, &u) in upstream.iter().enumerate() {
            let u = u * scale;
            grads.bias[r] += u;
            grads.weights[(r, c)] += u;
        }
    }
}

impl<F: Scalar> Parameters<F> for Dense<F> {
    fn tensors(&self) -> Vec<TensorView<'_, F>> {
        vec![
            TensorView {
                name: "weights".into(),
                shape: vec![self.out_dim(), self.in_dim()],
                data: self.weights.as_slice(),
            },
            TensorView {
                name: "bias".into(),
                shape: vec![self.bias.len()],
                data: &self.bias,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![self.weights.as_mut_slice(), &mut self.bias]
    }
}

/// Free-function form of [`Dense::forward`].
pub fn dense_forward<F: Scalar>(p: &Dense<F>, x: &[F]) -> Result<(Vec<F>, DenseCache<F>)> {
    p.forward(x)
}

/// Free-function form of [`Dense::backward`].
pub fn dense_backward<F: Scalar>(
    p: &Dense<F>,
    cache: &DenseCache<F>,
    upstream: &[F],
) -> Result<(Dense<F>, Vec<F>)> {
    p.backward(cache, upstream)
}

#[derive(Clone, Debug)]
pub struct SigmoidCache<F> {
    pub output: Vec<F>,
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

pub fn sigmoid_forward<F: Scalar>(x: &[F]) -> (Vec<F>, SigmoidCache<F>) {
    let y: Vec<F> = x.iter().map(|&v| sigmoid(v)).collect();
    (y.clone(), SigmoidCache { output: y })
}

pub fn sigmoid_backward<F: Scalar>(cache: &SigmoidCache<F>, upstream: &[F]) -> Result<Vec<F>> {
    if upstream.len() != cache.output.len() {
        return Err(Error::shape("sigmoid upstream", cache.output.len(), upstream.len()));
    }
    Ok(upstream
        .iter()
        .zip(&cache.output)
        .map(|(&u, &y)| u * y * (F::one() - y))
        .collect())
}

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_fill<F: Scalar, R: Rng + ?Sized>(
    out: &mut [F],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    for v in out {
        *v = F::of(rng.random_range(-a..=a));
    }
}
