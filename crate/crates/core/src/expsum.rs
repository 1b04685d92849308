//! Shifted evaluation of exponential sums `sum_i w_i exp(y_i z + var * y_i^2 / 2)`.
//!
//! Every quantity is returned either in log form or as a ratio to the sum
//! itself, so nothing overflows for large `z` or large variance.

use serde::Serialize;

/// A point mass of the measure behind a power-sum inverse marginal
/// `I(x) = sum_i weight_i * x^(-exponent_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub exponent: f64,
    pub weight: f64,
}

impl Atom {
    pub const fn new(exponent: f64, weight: f64) -> Self {
        Self { exponent, weight }
    }
}

/// Derivative ratios of an exponential sum `S(z) = sum_i c_i exp(y_i z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpSumMoments {
    /// `log S`
    pub log_value: f64,
    /// `S^(n) / S` for n = 0..=4.
    pub ratios: [f64; 5],
    /// `(S S'' - S'^2) / S^2`, assembled pairwise so it is never negative.
    pub log_convexity: f64,
    /// `(S' S''' - S''^2) / S^2`, assembled pairwise so it is never negative.
    pub derivative_log_convexity: f64,
}

impl ExpSumMoments {
    pub fn derivative(&self, order: usize) -> f64 {
        self.log_value.exp() * self.ratios[order]
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Moments of `z -> sum_i w_i exp(y_i z + var y_i^2 / 2)`; `var` is `|lambda|^2 (T - t)`.
pub fn moments(atoms: &[Atom], z: f64, var: f64) -> ExpSumMoments {
    let logs: Vec<f64> = atoms
        .iter()
        .map(|a| a.weight.ln() + a.exponent * z + 0.5 * var * a.exponent * a.exponent)
        .collect();
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
    let total: f64 = scaled.iter().sum();

    let mut ratios = [0.0; 5];
    for (n, ratio) in ratios.iter_mut().enumerate() {
        *ratio = atoms
            .iter()
            .zip(&scaled)
            .map(|(a, c)| c * a.exponent.powi(n as i32))
            .sum::<f64>()
            / total;
    }

    let mut w1 = 0.0;
    let mut w2 = 0.0;
    for i in 0..atoms.len() {
        for j in (i + 1)..atoms.len() {
            let (yi, yj) = (atoms[i].exponent, atoms[j].exponent);
            let cc = scaled[i] * scaled[j];
            let d2 = (yi - yj) * (yi - yj);
            w1 += cc * d2;
            w2 += cc * yi * yj * d2;
        }
    }
    let t2 = total * total;

    ExpSumMoments {
        log_value: shift + total.ln(),
        ratios,
        log_convexity: w1 / t2,
        derivative_log_convexity: w2 / t2,
    }
}
