//! Terminal preferences: inverse marginals `I = (U')^(-1)`, risk tolerance
//! coefficients `R = -U'/U''`, and empirical constants for the growth and
//! ratio conditions imposed on `I`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::expsum::{self, Atom};
use crate::roots::{self, RootFailure, RootOptions};

/// Derivatives of a user-supplied inverse marginal: `f(x, n) = I^(n)(x)`.
pub type InverseFn = dyn Fn(f64, usize) -> f64 + Send + Sync;

/// An inverse marginal given in closed form together with its derivatives.
#[derive(Clone)]
pub struct AnalyticInverse {
    name: String,
    max_order: usize,
    f: Arc<InverseFn>,
}

impl AnalyticInverse {
    pub fn new<F>(name: impl Into<String>, max_order: usize, f: F) -> Self
    where
        F: Fn(f64, usize) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            max_order,
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    fn eval(&self, x: f64, order: usize) -> f64 {
        (self.f)(x, order)
    }
}

impl fmt::Debug for AnalyticInverse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticInverse")
            .field("name", &self.name)
            .field("max_order", &self.max_order)
            .finish()
    }
}

/// Risk tolerance samples `R(x_k)` with `x_0 = 0`, `R(0) = 0`, interpolated by
/// a monotone piecewise-cubic Hermite (Fritsch-Carlson) curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TabulatedR {
    x: Vec<f64>,
    r: Vec<f64>,
    #[serde(skip)]
    slopes: Vec<f64>,
}

impl TabulatedR {
    pub fn new(x: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if x.len() != r.len() {
            return Err(Error::InvalidSpec(format!(
                "tabulated R has {} abscissae but {} values",
                x.len(),
                r.len()
            )));
        }
        if x.len() < 3 {
            return Err(Error::InvalidSpec("tabulated R needs at least 3 samples".into()));
        }
        if x[0] != 0.0 || r[0] != 0.0 {
            return Err(Error::InvalidSpec(format!(
                "tabulated R must start at (0, 0), got ({}, {})",
                x[0], r[0]
            )));
        }
        for k in 1..x.len() {
            if !(x[k] > x[k - 1]) || !x[k].is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "x column not strictly increasing at row {k}"
                )));
            }
            if !(r[k] > r[k - 1]) || !r[k].is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "R column not strictly increasing at row {k}"
                )));
            }
        }
        let slopes = pchip_slopes(&x, &r);
        Ok(Self { x, r, slopes })
    }

    /// Samples `f` on `grid` (which must start at 0).
    pub fn from_fn<F: Fn(f64) -> f64>(grid: &[f64], f: F) -> Result<Self> {
        Self::new(grid.to_vec(), grid.iter().map(|&x| f(x)).collect())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.r
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.eval_with_derivative(x).map(|(v, _)| v)
    }

    /// Interpolated `(R(x), R'(x))`.
    pub fn eval_with_derivative(&self, x: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange { value: x, lo, hi });
        }
        let k = match self.x.partition_point(|&xi| xi <= x) {
            0 => 0,
            p if p >= self.x.len() => self.x.len() - 2,
            p => p - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (x - self.x[k]) / h;
        let (y0, y1) = (self.r[k], self.r[k + 1]);
        let (m0, m1) = (self.slopes[k], self.slopes[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let deriv = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
        Ok((value, deriv))
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    m[0] = pchip_end(h[0], h[1], d[0], d[1]);
    m[n - 1] = pchip_end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

fn pchip_end(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// A terminal preference.
#[derive(Debug, Clone)]
pub enum UtilitySpec {
    /// Completely monotonic inverse marginal from a finite atomic measure on
    /// exponents `y > 1`.
    CmMeasure(Vec<Atom>),
    /// Power sum `sum_i w_i x^(-y_i)` with any positive exponents.
    ExpSum(Vec<Atom>),
    AnalyticI(AnalyticInverse),
    TabulatedR(TabulatedR),
}

/// 81 logarithmically spaced points on `[1e-4, 1e4]`.
pub fn default_probe_grid() -> Vec<f64> {
    log_grid(1e-4, 1e4, 81)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k + 1 == n => hi,
            k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

impl UtilitySpec {
    pub fn cm_measure(atoms: Vec<Atom>) -> Result<Self> {
        check_atoms(&atoms, 1.0)?;
        Ok(Self::CmMeasure(atoms))
    }

    pub fn exp_sum(atoms: Vec<Atom>) -> Result<Self> {
        check_atoms(&atoms, 0.0)?;
        Ok(Self::ExpSum(atoms))
    }

    /// Validates `I > 0`, `I' < 0`, `I'' > 0` and the supplied derivatives
    /// against central differences on the default probe grid.
    pub fn analytic_i(inverse: AnalyticInverse) -> Result<Self> {
        Self::analytic_i_on(inverse, &default_probe_grid())
    }

    pub fn analytic_i_on(inverse: AnalyticInverse, probes: &[f64]) -> Result<Self> {
        if inverse.max_order < 2 {
            return Err(Error::InvalidSpec(format!(
                "{}: at least two derivatives are required",
                inverse.name
            )));
        }
        for &x in probes {
            let i0 = inverse.eval(x, 0);
            let i1 = inverse.eval(x, 1);
            let i2 = inverse.eval(x, 2);
            if !(i0 > 0.0 && i0.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "{}: I({x}) = {i0} is not positive",
                    inverse.name
                )));
            }
            if !(i1 < 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "{}: I'({x}) = {i1} is not negative",
                    inverse.name
                )));
            }
            if !(i2 > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "{}: I''({x}) = {i2} is not positive",
                    inverse.name
                )));
            }
            for n in 0..inverse.max_order {
                // Step on the local length scale of the n-th derivative.
                let scale = (inverse.eval(x, n) / inverse.eval(x, n + 1)).abs();
                let h = 1e-3 * x.min(scale);
                let central = |h: f64| (inverse.eval(x + h, n) - inverse.eval(x - h, n)) / (2.0 * h);
                let fd = (4.0 * central(0.5 * h) - central(h)) / 3.0;
                let exact = inverse.eval(x, n + 1);
                let rel = (fd - exact).abs() / exact.abs().max(f64::MIN_POSITIVE);
                if rel > 1e-6 {
                    return Err(Error::InvalidSpec(format!(
                        "{}: derivative of order {} disagrees with finite differences at x = {x} (relative {rel:e})",
                        inverse.name,
                        n + 1
                    )));
                }
            }
        }
        Ok(Self::AnalyticI(inverse))
    }

    pub fn tabulated_r(table: TabulatedR) -> Self {
        Self::TabulatedR(table)
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::CmMeasure(_) => "CMMeasure",
            Self::ExpSum(_) => "ExpSum",
            Self::AnalyticI(_) => "AnalyticI",
            Self::TabulatedR(_) => "TabulatedR",
        }
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match self {
            Self::CmMeasure(a) | Self::ExpSum(a) => Some(a),
            _ => None,
        }
    }

    /// `(min, max)` exponent of an atomic spec.
    pub fn exponent_range(&self) -> Option<(f64, f64)> {
        self.atoms().map(|atoms| {
            atoms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
                (lo.min(a.exponent), hi.max(a.exponent))
            })
        })
    }

    pub fn has_inverse_marginal(&self) -> bool {
        !matches!(self, Self::TabulatedR(_))
    }

    /// `I^(order)(x)`.
    pub fn eval_i(&self, x: f64, order: usize) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::InvalidArgument(format!("I is defined for x > 0, got {x}")));
        }
        match self {
            Self::CmMeasure(atoms) | Self::ExpSum(atoms) => Ok(atoms
                .iter()
                .map(|a| {
                    let falling: f64 = (0..order).map(|k| -a.exponent - k as f64).product();
                    a.weight * falling * x.powf(-a.exponent - order as f64)
                })
                .sum()),
            Self::AnalyticI(inv) => {
                if order > inv.max_order {
                    Err(Error::InvalidArgument(format!(
                        "{} supplies derivatives up to order {}, requested {order}",
                        inv.name, inv.max_order
                    )))
                } else {
                    Ok(inv.eval(x, order))
                }
            }
            Self::TabulatedR(_) => Err(Error::UnsupportedVariant {
                variant: "TabulatedR",
                reason: "no inverse marginal is available",
            }),
        }
    }

    /// Terminal heat datum `H(z, T) = I(e^-z)` and its z-derivatives up to order 3.
    pub fn terminal_h(&self, z: f64, order: usize) -> Result<f64> {
        match self {
            Self::CmMeasure(atoms) | Self::ExpSum(atoms) => {
                if order > 4 {
                    return Err(Error::InvalidArgument(format!("terminal derivative order {order} > 4")));
                }
                Ok(expsum::moments(atoms, z, 0.0).derivative(order))
            }
            Self::AnalyticI(_) => {
                let s = (-z).exp();
                let i = |n| self.eval_i(s, n);
                match order {
                    0 => i(0),
                    1 => Ok(-s * i(1)?),
                    2 => Ok(s * i(1)? + s * s * i(2)?),
                    3 => Ok(-s * i(1)? - 3.0 * s * s * i(2)? - s * s * s * i(3)?),
                    _ => Err(Error::InvalidArgument(format!("terminal derivative order {order} > 3"))),
                }
            }
            Self::TabulatedR(_) => Err(Error::UnsupportedVariant {
                variant: "TabulatedR",
                reason: "no inverse marginal is available",
            }),
        }
    }

    /// `log H(z, T)` and `d/dz log H(z, T)`.
    pub(crate) fn terminal_log_h(&self, z: f64) -> Result<(f64, f64)> {
        match self {
            Self::CmMeasure(atoms) | Self::ExpSum(atoms) => {
                let m = expsum::moments(atoms, z, 0.0);
                Ok((m.log_value, m.ratios[1]))
            }
            _ => {
                let h = self.terminal_h(z, 0)?;
                let hz = self.terminal_h(z, 1)?;
                Ok((h.ln(), hz / h))
            }
        }
    }

    /// Risk tolerance coefficient `R(x) = -U'(x)/U''(x)`.
    pub fn eval_r_terminal(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::InvalidArgument(format!("R is evaluated for x > 0, got {x}")));
        }
        match self {
            Self::TabulatedR(table) => table.eval(x),
            _ => {
                // R(I(y)) = -y I'(y); with y = e^-z this is H_z(z, T) at H(z, T) = x.
                let z = self.terminal_z(x)?;
                self.terminal_h(z, 1)
            }
        }
    }

    /// The unique `z` with `H(z, T) = x`.
    pub fn terminal_z(&self, x: f64) -> Result<f64> {
        let target = x.ln();
        let mut failure = None;
        let z = roots::solve_increasing(
            |z| match self.terminal_log_h(z) {
                Ok((lh, dlh)) => (lh - target, dlh),
                Err(e) => {
                    failure = Some(e);
                    (f64::NAN, f64::NAN)
                }
            },
            0.0,
            &RootOptions::default(),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        z.map_err(|f| match f {
            RootFailure::Bracket { expansions } => Error::BracketExpansion {
                x,
                t: f64::NAN,
                expansions,
            },
            RootFailure::NoConvergence { iterations } => Error::NoConvergence { target: x, iterations },
        })
    }
}

fn check_atoms(atoms: &[Atom], exponent_floor: f64) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::InvalidSpec("at least one atom is required".into()));
    }
    for a in atoms {
        if !(a.exponent > exponent_floor) || !a.exponent.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "exponent {} must exceed {exponent_floor}",
                a.exponent
            )));
        }
        if !(a.weight > 0.0) || !a.weight.is_finite() {
            return Err(Error::InvalidSpec(format!("weight {} must be positive", a.weight)));
        }
    }
    Ok(())
}

/// Empirical constants of the growth bound `I <= C (1 + x^-delta)` and the
/// ratio bounds
/// `c1 I <= |x I'| <= C1 I`, `c2 |I'| <= x I'' <= C2 |I'|`, `|x I'''| <= C3 I''`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionConstants {
    pub growth: f64,
    pub delta: f64,
    pub lower_1: f64,
    pub upper_1: f64,
    pub lower_2: f64,
    pub upper_2: f64,
    pub upper_3: f64,
}

pub fn validate_conditions(spec: &UtilitySpec, probes: &[f64]) -> Result<ConditionConstants> {
    if let UtilitySpec::TabulatedR(_) = spec {
        return Err(Error::UnsupportedVariant {
            variant: "TabulatedR",
            reason: "the conditions are stated on I, not on R",
        });
    }
    let lo = probes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = probes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) || lo > 1e-2 || hi < 1e2 {
        return Err(Error::InvalidArgument(format!(
            "probe grid [{lo}, {hi}] must be positive and span at least [1e-2, 1e2]"
        )));
    }

    let mut c = ConditionConstants {
        growth: 0.0,
        delta: 0.0,
        lower_1: f64::INFINITY,
        upper_1: 0.0,
        lower_2: f64::INFINITY,
        upper_2: 0.0,
        upper_3: 0.0,
    };
    let mut lower_2_at = f64::NAN;
    let mut values = Vec::with_capacity(probes.len());
    for &x in probes {
        let i0 = spec.eval_i(x, 0)?;
        let i1 = spec.eval_i(x, 1)?;
        let i2 = spec.eval_i(x, 2)?;
        let i3 = spec.eval_i(x, 3)?;
        if !(i0 > 0.0 && i0.is_finite()) {
            return Err(Error::ConditionViolated {
                inequality: "I-decay",
                x,
                detail: format!("I(x) = {i0} is not a positive finite value"),
            });
        }
        if !(i1 < 0.0) {
            return Err(Error::ConditionViolated {
                inequality: "I-1",
                x,
                detail: format!("I'(x) = {i1} is not negative"),
            });
        }
        if !(i2 > 0.0) {
            return Err(Error::ConditionViolated {
                inequality: "I-2",
                x,
                detail: format!("I''(x) = {i2} is not positive"),
            });
        }
        let ratio_1 = (x * i1).abs() / i0;
        let ratio_2 = x * i2 / i1.abs();
        let ratio_3 = (x * i3).abs() / i2;
        for (name, r) in [("I-1", ratio_1), ("I-2", ratio_2), ("I-2", ratio_3)] {
            if !r.is_finite() {
                return Err(Error::ConditionViolated {
                    inequality: name,
                    x,
                    detail: format!("ratio is not finite ({r})"),
                });
            }
        }
        c.lower_1 = c.lower_1.min(ratio_1);
        c.upper_1 = c.upper_1.max(ratio_1);
        if ratio_2 < c.lower_2 {
            c.lower_2 = ratio_2;
            lower_2_at = x;
        }
        c.upper_2 = c.upper_2.max(ratio_2);
        c.upper_3 = c.upper_3.max(ratio_3);
        values.push((x, i0));
    }
    if !(c.lower_2 > 1.0) {
        return Err(Error::ConditionViolated {
            inequality: "I-2",
            x: lower_2_at,
            detail: format!("x I''/|I'| = {} but the lower constant must exceed 1", c.lower_2),
        });
    }
    c.delta = c.upper_1;
    c.growth = values
        .iter()
        .map(|&(x, i0)| i0 / (1.0 + x.powf(-c.delta)))
        .fold(0.0, f64::max);
    Ok(c)
}

/// Density of the Bernstein measure of an atomic spec,
/// `rho -> sum_i w_i rho^(y_i - 1) / Gamma(y_i)`.
pub fn bernstein_transform(spec: &UtilitySpec, rho: f64) -> Result<f64> {
    let atoms = spec.atoms().ok_or(Error::UnsupportedVariant {
        variant: spec.variant_name(),
        reason: "Bernstein density needs an atomic measure",
    })?;
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    Ok(atoms
        .iter()
        .map(|a| a.weight * rho.powf(a.exponent - 1.0) / gamma(a.exponent))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn mix23() -> UtilitySpec {
        fixtures::mix23()
    }

    #[test]
    fn eval_i_examples() {
        assert_eq!(mix23().eval_i(1.0, 0).unwrap(), 2.0);
        assert_eq!(fixtures::log_utility().eval_i(4.0, 0).unwrap(), 0.25);
        let e = std::f64::consts::E;
        let v = mix23().eval_i(1.0 / e, 0).unwrap();
        assert!((v - (e * e + e * e * e)).abs() < 1e-12);
        assert!((v - 27.47459).abs() < 1e-5);
    }

    #[test]
    fn eval_i_rejects_bad_input() {
        assert!(mix23().eval_i(0.0, 0).is_err());
        assert!(mix23().eval_i(-1.0, 1).is_err());
        let tab = UtilitySpec::tabulated_r(TabulatedR::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]).unwrap());
        assert!(matches!(tab.eval_i(1.0, 0), Err(Error::UnsupportedVariant { .. })));
        let inv = fixtures::relative_curvature_inverse();
        assert!(inv.eval_i(1.0, 4).is_err());
    }

    #[test]
    fn complete_monotonicity_signs() {
        let spec = UtilitySpec::cm_measure(vec![Atom::new(1.5, 2.0), Atom::new(4.0, 1.0)]).unwrap();
        for x in log_grid(1e-3, 1e3, 25) {
            for n in 1..=3 {
                let v = spec.eval_i(x, n).unwrap();
                assert_eq!(v.signum(), if n % 2 == 1 { -1.0 } else { 1.0 }, "x={x} n={n}");
            }
        }
    }

    #[test]
    fn eval_r_examples() {
        assert!((fixtures::log_utility().eval_r_terminal(5.0).unwrap() - 5.0).abs() < 1e-12);
        assert!((fixtures::power2().eval_r_terminal(3.0).unwrap() - 6.0).abs() < 1e-12);
        assert!((mix23().eval_r_terminal(2.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn eval_r_tabulated_no_extrapolation() {
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let tab = TabulatedR::from_fn(&grid, fixtures::sshape_r).unwrap();
        let spec = UtilitySpec::tabulated_r(tab);
        assert!((spec.eval_r_terminal(3.0).unwrap() - fixtures::sshape_r(3.0)).abs() < 1e-12);
        assert!((spec.eval_r_terminal(3.3).unwrap() - fixtures::sshape_r(3.3)).abs() < 1e-3);
        assert!(matches!(spec.eval_r_terminal(10.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn tabulated_r_validation() {
        assert!(TabulatedR::new(vec![0.0, 1.0, 2.0], vec![0.1, 1.0, 2.0]).is_err());
        assert!(TabulatedR::new(vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]).is_err());
        assert!(TabulatedR::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.0]).is_err());
        assert!(TabulatedR::new(vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn validate_mix23_matches_power_sum_constants() {
        let c = validate_conditions(&mix23(), &default_probe_grid()).unwrap();
        let slack = 1e-3;
        assert!((c.lower_1 - 2.0).abs() < slack);
        assert!((c.upper_1 - 3.0).abs() < slack);
        assert!((c.lower_2 - 3.0).abs() < slack);
        assert!((c.upper_2 - 4.0).abs() < slack);
        assert!((c.upper_3 - 5.0).abs() < slack);
        assert!(c.growth > 0.0 && c.delta > 0.0);
    }

    #[test]
    fn validate_single_power_is_exact() {
        let c = validate_conditions(&fixtures::power2(), &default_probe_grid()).unwrap();
        for (got, want) in [
            (c.lower_1, 2.0),
            (c.upper_1, 2.0),
            (c.lower_2, 3.0),
            (c.upper_2, 3.0),
            (c.upper_3, 4.0),
        ] {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn validate_rejects_tabulated_and_narrow_grids() {
        let tab = UtilitySpec::tabulated_r(TabulatedR::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]).unwrap());
        assert!(matches!(
            validate_conditions(&tab, &default_probe_grid()),
            Err(Error::UnsupportedVariant { .. })
        ));
        assert!(validate_conditions(&mix23(), &log_grid(0.5, 2.0, 10)).is_err());
    }

    #[test]
    fn validate_flags_small_second_ratio() {
        // I(x) = e^-x has x I''/|I'| = x, which drops below one for x < 1.
        let grid = log_grid(1e-2, 1e2, 21);
        let inv = AnalyticInverse::new("exp", 3, |x: f64, n| {
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            s * (-x).exp()
        });
        let spec = UtilitySpec::analytic_i_on(inv, &grid).unwrap();
        match validate_conditions(&spec, &grid) {
            Err(Error::ConditionViolated { inequality, x, .. }) => {
                assert_eq!(inequality, "I-2");
                assert!((x - 1e-2).abs() < 1e-15);
            }
            other => panic!("expected a violation, got {other:?}"),
        }
    }

    #[test]
    fn bernstein_examples() {
        assert!((bernstein_transform(&fixtures::power2(), 3.0).unwrap() - 3.0).abs() < 1e-14);
        assert!((bernstein_transform(&mix23(), 1.0).unwrap() - 1.5).abs() < 1e-14);
        assert!(bernstein_transform(&mix23(), 0.0).is_err());
    }

    #[test]
    fn bernstein_density_reproduces_laplace_transform() {
        // int_0^inf e^{-x rho} rho drho = x^-2 at x = 2, by Gauss-Laguerre-free
        // composite Simpson on a truncated range.
        let spec = fixtures::power2();
        let x = 2.0;
        let n = 20_000;
        let upper = 40.0;
        let h = upper / n as f64;
        let f = |rho: f64| (-x * rho).exp() * bernstein_transform(&spec, rho.max(1e-300)).unwrap();
        let mut s = f(1e-300) + f(upper);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = s * h / 3.0;
        assert!((integral - 0.25).abs() < 1e-10);
    }

    #[test]
    fn analytic_inverse_validation_catches_bad_derivative() {
        let bad = AnalyticInverse::new("bad", 2, |x, n| match n {
            0 => 1.0 / x,
            1 => -1.0 / (x * x),
            _ => 1.0 / (x * x * x), // should be 2/x^3
        });
        assert!(UtilitySpec::analytic_i(bad).is_err());
        let increasing = AnalyticInverse::new("inc", 2, |x, n| match n {
            0 => x,
            1 => 1.0,
            _ => 0.0,
        });
        assert!(UtilitySpec::analytic_i(increasing).is_err());
    }

    #[test]
    fn analytic_terminal_chain_rule_matches_power_sum() {
        // The same power sum through both code paths.
        let inv = AnalyticInverse::new("mix23", 3, |x, n| mix23().eval_i(x, n).unwrap());
        let spec = UtilitySpec::analytic_i(inv).unwrap();
        for z in [-2.0, -0.3, 0.0, 1.1] {
            for n in 0..=3 {
                let a = spec.terminal_h(z, n).unwrap();
                let b = mix23().terminal_h(z, n).unwrap();
                assert!(((a - b) / b).abs() < 1e-13, "z={z} n={n}");
            }
        }
    }
}
