use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{glorot_fill, sigmoid};
use super::params::{Matrix, Parameters, TensorView};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dimension-wise comparison of two equally sized vectors.
///
/// Each of the `f` filters is a 2x1 kernel sliding over the dimensions with
/// the two inputs as channels; a sigmoid follows, and an `f`x1 kernel folds
/// the feature maps back into a single vector of the input length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairConv<F> {
    /// `f x 2`: column 0 weighs the first channel, column 1 the second.
    pub filters: Matrix<F>,
    pub combiner: Vec<F>,
}

#[derive(Clone, Debug)]
pub struct PairConvCache<F> {
    pub a: Vec<F>,
    pub b: Vec<F>,
    /// Post-sigmoid feature maps, `f x d`.
    pub maps: Matrix<F>,
}

impl<F: Scalar> PairConv<F> {
    pub fn zeros(n_filters: usize) -> Self {
        PairConv {
            filters: Matrix::zeros(n_filters, 2),
            combiner: vec![F::zero(); n_filters],
        }
    }

    pub fn new(filters: Matrix<F>, combiner: Vec<F>) -> Result<Self> {
        if filters.cols() != 2 {
            return Err(Error::shape("pair-conv kernel width", 2, filters.cols()));
        }
        if filters.rows() == 0 {
            return Err(Error::config("n_filters", "must be at least 1"));
        }
        if filters.rows() != combiner.len() {
            return Err(Error::shape("pair-conv combiner", filters.rows(), combiner.len()));
        }
        Ok(PairConv { filters, combiner })
    }

    pub fn init<R: Rng + ?Sized>(n_filters: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_filters);
        glorot_fill(p.filters.as_mut_slice(), 2, n_filters, rng);
        glorot_fill(&mut p.combiner, n_filters, 1, rng);
        p
    }

    #[inline]
    pub fn n_filters(&self) -> usize {
        self.combiner.len()
    }

    pub fn forward(&self, a: &[F], b: &[F]) -> Result<(Vec<F>, PairConvCache<F>)> {
        if a.len() != b.len() {
            return Err(Error::shape("pair-conv channels", a.len(), b.len()));
        }
        let d = a.len();
        let mut maps = Matrix::zeros(self.n_filters(), d);
        let mut out = vec![F::zero(); d];
        for k in 0..self.n_filters() {
            let (w0, w1, c) = (self.filters[(k, 0)], self.filters[(k, 1)], self.combiner[k]);
            let row = maps.row_mut(k);
            for j in 0..d {
                let m = sigmoid(w0 * a[j] + w1 * b[j]);
                row[j] = m;
                out[j] += c * m;
            }
        }
        let cache = PairConvCache {
            a: a.to_vec(),
            b: b.to_vec(),
            maps,
        };
        Ok((out, cache))
    }

    /// Accumulates `scale * dL/dparams` into `grads` and returns the
    /// (unscaled) gradients with respect to both input channels.
    pub fn backward_into(
        &self,
        cache: &PairConvCache<F>,
        upstream: &[F],
        scale: F,
        grads: &mut PairConv<F>,
    ) -> Result<(Vec<F>, Vec<F>)> {
        let d = cache.a.len();
        if upstream.len() != d {
            return Err(Error::shape("pair-conv upstream", d, upstream.len()));
        }
        if cache.maps.rows() != self.n_filters() || cache.maps.cols() != d {
            return Err(Error::Consistency(
                "pair-conv cache does not match the filter bank".into(),
            ));
        }
        if grads.n_filters() != self.n_filters() {
            return Err(Error::shape(
                "pair-conv gradient buffer",
                self.n_filters(),
                grads.n_filters(),
            ));
        }
        let mut da = vec![F::zero(); d];
        let mut db = vec![F::zero(); d];
        for k in 0..self.n_filters() {
            let (w0, w1, c) = (self.filters[(k, 0)], self.filters[(k, 1)], self.combiner[k]);
            let row = cache.maps.row(k);
            let (mut gc, mut g0, mut g1) = (F::zero(), F::zero(), F::zero());
            for j in 0..d {
                let m = row[j];
                gc += upstream[j] * m;
                // gradient at the pre-activation of filter k, dimension j
                let pre = upstream[j] * c * m * (F::one() - m);
                g0 += pre * cache.a[j];
                g1 += pre * cache.b[j];
                da[j] += pre * w0;
                db[j] += pre * w1;
            }
            grads.combiner[k] += scale * gc;
            grads.filters[(k, 0)] += scale * g0;
            grads.filters[(k, 1)] += scale * g1;
        }
        Ok((da, db))
    }

    pub fn backward(
        &self,
        cache: &PairConvCache<F>,
        upstream: &[F],
    ) -> Result<(PairConv<F>, Vec<F>, Vec<F>)> {
        let mut grads = self.zeros_like();
        let (da, db) = self.backward_into(cache, upstream, F::one(), &mut grads)?;
        Ok((grads, da, db))
    }
}

impl<F: Scalar> Parameters<F> for PairConv<F> {
    fn tensors(&self) -> Vec<TensorView<'_, F>> {
        vec![
            TensorView {
                name: "filters".into(),
                shape: vec![self.n_filters(), 2],
                data: self.filters.as_slice(),
            },
            TensorView {
                name: "combiner".into(),
                shape: vec![self.n_filters()],
                data: &self.combiner,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![self.filters.as_mut_slice(), &mut self.combiner]
    }
}

pub fn pair_conv_forward<F: Scalar>(
    p: &PairConv<F>,
    a: &[F],
    b: &[F],
) -> Result<(Vec<F>, PairConvCache<F>)> {
    p.forward(a, b)
}
