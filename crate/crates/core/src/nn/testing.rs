//! Finite-difference helpers for gradient tests.

use super::params::Parameters;
use crate::scalar::Scalar;

/// Central difference of `loss` with respect to the `index`-th parameter.
pub fn central_difference<F, P, L>(params: &P, index: usize, eps: f64, mut loss: L) -> f64
where
    F: Scalar,
    P: Parameters<F>,
    L: FnMut(&P) -> f64,
{
    let mut plus = params.clone();
    let mut minus = params.clone();
    *plus.param_mut(index).expect("index in range") += F::of(eps);
    *minus.param_mut(index).expect("index in range") -= F::of(eps);
    (loss(&plus) - loss(&minus)) / (2.0 * eps)
}

/// Relative comparison with an absolute floor for values near zero.
pub fn rel_close(analytic: f64, numeric: f64, rel: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs()).max(1e-3);
    (analytic - numeric).abs() <= rel * scale
}
