use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How the temperature enters the exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GibbsExponent {
    /// `exp(score / tau)`
    #[default]
    Divide,
    /// `exp(score * tau)`
    Multiply,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsConfig {
    pub tau: f64,
    #[serde(default)]
    pub exponent: GibbsExponent,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            tau: 10.0,
            exponent: GibbsExponent::Divide,
        }
    }
}

impl GibbsConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let g = GibbsConfig {
            tau,
            exponent: GibbsExponent::Divide,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", format!("must be finite and > 0, got {}", self.tau)));
        }
        Ok(())
    }

    /// Factor applied to raw scores before exponentiation; also the chain-rule
    /// factor from log-probabilities back to raw scores.
    #[inline]
    pub fn inverse_temperature(&self) -> f64 {
        match self.exponent {
            GibbsExponent::Divide => 1.0 / self.tau,
            GibbsExponent::Multiply => self.tau,
        }
    }
}

/// Temperature softmax, stabilized by subtracting the largest score.
pub fn gibbs<F: Scalar>(scores: &[F], g: &GibbsConfig) -> Result<Vec<F>> {
    softmax_scaled(scores, F::of(g.inverse_temperature()))
}

/// Plain softmax (unit temperature).
pub fn softmax<F: Scalar>(scores: &[F]) -> Result<Vec<F>> {
    softmax_scaled(scores, F::one())
}

fn softmax_scaled<F: Scalar>(scores: &[F], beta: F) -> Result<Vec<F>> {
    if scores.is_empty() {
        return Err(Error::Domain("softmax over an empty score vector".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("softmax scores".into()));
    }
    let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
    let mut probs: Vec<F> = scores.iter().map(|&s| ((s - max) * beta).exp()).collect();
    let z: F = probs.iter().copied().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(probs)
}

/// Gradient of `log probs[action]` with respect to the raw scores:
/// `(1[j = action] - probs_j) * beta`, where `beta` is the inverse temperature.
pub fn log_prob_score_grad<F: Scalar>(probs: &[F], action: usize, beta: F) -> Vec<F> {
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let indicator = if j == action { F::one() } else { F::zero() };
            (indicator - p) * beta
        })
        .collect()
}

/// Shannon entropy in nats.
pub fn entropy<F: Scalar>(probs: &[F]) -> F {
    probs
        .iter()
        .filter(|p| **p > F::zero())
        .fold(F::zero(), |h, &p| h - p * p.ln())
}

/// `dH / d score_j = -beta * p_j * (ln p_j + H)` for a Gibbs layer with
/// inverse temperature `beta`.
pub fn entropy_score_grad<F: Scalar>(probs: &[F], beta: F) -> Vec<F> {
    let h = entropy(probs);
    probs
        .iter()
        .map(|&p| if p > F::zero() { -beta * p * (p.ln() + h) } else { F::zero() })
        .collect()
}

pub fn validate_distribution<F: Scalar>(probs: &[F]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Distribution("empty probability vector".into()));
    }
    let mut total = 0.0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Distribution(format!("entry {i} is {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > F::prob_tolerance(probs.len()) {
        return Err(Error::Distribution(format!("probabilities sum to {total}")));
    }
    Ok(())
}

/// Inverse-CDF draw from a categorical distribution.
pub fn sample_categorical<F: Scalar, R: Rng + ?Sized>(probs: &[F], rng: &mut R) -> Result<usize> {
    validate_distribution(probs)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_nonzero = i;
            acc += p;
            if u < acc {
                return Ok(i);
            }
        }
    }
    // u landed in the rounding gap above the accumulated mass
    Ok(last_nonzero)
}

/// Index of the largest probability, lowest index on ties.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
