//! The harmonic function `H(z, t)`: solution of `H_t + |lambda|^2 H_zz / 2 = 0`
//! with `H(z, T) = I(e^-z)`, together with its first three z-derivatives.
//!
//! Power-sum terminal data are evolved in closed form,
//! `H(z, t) = sum_i w_i exp(y_i z + |lambda|^2 y_i^2 (T - t) / 2)`.
//! Any other terminal datum goes through the Gaussian representation
//! `H(z, t) = E[H(z + |lambda| sqrt(T - t) xi, T)]`, evaluated by
//! Gauss-Hermite quadrature. Derivatives are obtained by differentiating the
//! terminal datum under the expectation.
//!
//! Internally the time to horizon `tau = T - t` is used; the public surface
//! speaks in calendar time `t`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expsum;
use crate::market::MarketParams;
use crate::preferences::UtilitySpec;
use crate::quadrature::GaussHermite;

pub const DEFAULT_QUADRATURE_ORDER: usize = 128;

/// Relative mass allowed on the outermost node on each side before a
/// quadrature evaluation is rejected as truncated.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;

/// A terminal datum given directly in the z variable: `f(z, n) = d^n h0/dz^n`.
#[derive(Clone)]
pub struct ZFunction {
    name: String,
    f: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>,
}

impl ZFunction {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, usize) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, z: f64, order: usize) -> f64 {
        (self.f)(z, order)
    }
}

impl fmt::Debug for ZFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZFunction").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum Terminal {
    /// `H(z, T) = I(e^-z)` from a utility spec.
    Utility(UtilitySpec),
    /// Any positive datum with at most exponential growth.
    Function(ZFunction),
}

impl Terminal {
    fn eval(&self, z: f64, order: usize) -> Result<f64> {
        match self {
            Terminal::Utility(spec) => spec.terminal_h(z, order),
            Terminal::Function(f) => Ok(f.eval(z, order)),
        }
    }
}

impl From<UtilitySpec> for Terminal {
    fn from(spec: UtilitySpec) -> Self {
        Terminal::Utility(spec)
    }
}

impl From<ZFunction> for Terminal {
    fn from(f: ZFunction) -> Self {
        Terminal::Function(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    ClosedForm,
    Quadrature,
}

/// `H` and its z-derivatives at one point, stored as `log H` and ratios
/// `H^(n)/H` so that large values of `z` do not overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatDerivs {
    pub log_h: f64,
    /// `H^(n) / H` for n = 0..=3.
    pub ratios: [f64; 4],
    /// `(H H_zz - H_z^2) / H^2`, i.e. `(log H)_zz`.
    pub w1: f64,
    /// `(H_z H_zzz - H_zz^2) / H^2`.
    pub w2: f64,
}

impl HeatDerivs {
    pub fn h(&self) -> f64 {
        self.log_h.exp()
    }

    pub fn derivative(&self, order: usize) -> f64 {
        self.h() * self.ratios[order]
    }

    pub fn hz(&self) -> f64 {
        self.derivative(1)
    }

    pub fn hzz(&self) -> f64 {
        self.derivative(2)
    }

    pub fn hzzz(&self) -> f64 {
        self.derivative(3)
    }

    /// `(log H)_zzz`.
    pub fn log_h_zzz(&self) -> f64 {
        let [_, p1, p2, p3] = self.ratios;
        p3 - 3.0 * p1 * p2 + 2.0 * p1 * p1 * p1
    }
}

#[derive(Debug, Clone)]
pub struct HeatSurface {
    terminal: Terminal,
    market: MarketParams,
    kind: EvaluatorKind,
    rule: Option<GaussHermite>,
    tail_tolerance: f64,
}

impl HeatSurface {
    /// Closed form for power sums, Gauss-Hermite of the default order otherwise.
    pub fn new(spec: UtilitySpec, market: MarketParams) -> Result<Self> {
        if spec.atoms().is_some() {
            Self::closed_form(spec, market)
        } else {
            Self::quadrature(spec, market, DEFAULT_QUADRATURE_ORDER)
        }
    }

    pub fn closed_form(spec: UtilitySpec, market: MarketParams) -> Result<Self> {
        if spec.atoms().is_none() {
            return Err(Error::UnsupportedVariant {
                variant: spec.variant_name(),
                reason: "closed-form evolution needs a power-sum inverse marginal",
            });
        }
        Ok(Self {
            terminal: Terminal::Utility(spec),
            market,
            kind: EvaluatorKind::ClosedForm,
            rule: None,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        })
    }

    pub fn quadrature(terminal: impl Into<Terminal>, market: MarketParams, order: usize) -> Result<Self> {
        let terminal = terminal.into();
        if let Terminal::Utility(UtilitySpec::TabulatedR(_)) = terminal {
            return Err(Error::UnsupportedVariant {
                variant: "TabulatedR",
                reason: "the heat transform needs an inverse marginal",
            });
        }
        Ok(Self {
            terminal,
            market,
            kind: EvaluatorKind::Quadrature,
            rule: Some(GaussHermite::new(order)?),
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        })
    }

    pub fn with_tail_tolerance(mut self, tol: f64) -> Self {
        self.tail_tolerance = tol;
        self
    }

    pub fn kind(&self) -> EvaluatorKind {
        self.kind
    }

    pub fn quadrature_order(&self) -> Option<usize> {
        self.rule.as_ref().map(GaussHermite::order)
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn lambda_sq(&self) -> f64 {
        self.market.lambda_sq()
    }

    pub fn horizon(&self) -> f64 {
        self.market.horizon()
    }

    pub fn spec(&self) -> Option<&UtilitySpec> {
        match &self.terminal {
            Terminal::Utility(s) => Some(s),
            Terminal::Function(_) => None,
        }
    }

    pub fn terminal(&self) -> &Terminal {
        &self.terminal
    }

    /// `d^order H / dz^order` at `(z, t)`.
    pub fn eval_h(&self, z: f64, t: f64, order: usize) -> Result<f64> {
        if order > 3 {
            return Err(Error::InvalidArgument(format!("derivative order {order} > 3")));
        }
        Ok(self.derivs(z, t)?.derivative(order))
    }

    /// `(log H, H_z / H)`, the cheap pair used by inversion.
    pub fn log_h(&self, z: f64, t: f64) -> Result<(f64, f64)> {
        let d = self.eval(z, t, 1)?;
        Ok((d.log_h, d.ratios[1]))
    }

    pub fn derivs(&self, z: f64, t: f64) -> Result<HeatDerivs> {
        self.eval(z, t, 3)
    }

    fn eval(&self, z: f64, t: f64, max_order: usize) -> Result<HeatDerivs> {
        self.market.check_time(t)?;
        let tau = (self.horizon() - t).max(0.0);
        match (&self.terminal, self.kind) {
            (Terminal::Utility(spec), EvaluatorKind::ClosedForm) => {
                let atoms = spec.atoms().expect("closed form requires atoms");
                let m = expsum::moments(atoms, z, self.lambda_sq() * tau);
                Ok(HeatDerivs {
                    log_h: m.log_value,
                    ratios: [1.0, m.ratios[1], m.ratios[2], m.ratios[3]],
                    w1: m.log_convexity,
                    w2: m.derivative_log_convexity,
                })
            }
            _ => self.eval_quadrature(z, t, tau, max_order),
        }
    }

    fn eval_quadrature(&self, z: f64, t: f64, tau: f64, max_order: usize) -> Result<HeatDerivs> {
        let mut sums = [0.0_f64; 4];
        if tau == 0.0 {
            for (n, s) in sums.iter_mut().enumerate().take(max_order + 1) {
                *s = self.terminal.eval(z, n)?;
            }
        } else {
            let rule = self.rule.as_ref().expect("quadrature surface has a rule");
            let scale = (self.lambda_sq() * tau).sqrt();
            let count = rule.order();
            let mut abs_total = 0.0;
            let mut abs_tail = 0.0;
            for (k, (xi, p)) in rule.normal_rule().enumerate() {
                let zeta = z + scale * xi;
                for (n, s) in sums.iter_mut().enumerate().take(max_order + 1) {
                    let v = p * self.terminal.eval(zeta, n)?;
                    *s += v;
                    if n == 0 {
                        abs_total += v.abs();
                        if k == 0 || k + 1 == count {
                            abs_tail += v.abs();
                        }
                    }
                }
            }
            let tail = if abs_total > 0.0 { abs_tail / abs_total } else { 0.0 };
            if !(tail <= self.tail_tolerance) {
                return Err(Error::QuadratureTruncation { z, t, tail });
            }
        }
        let h = sums[0];
        let p1 = sums[1] / h;
        let p2 = sums[2] / h;
        let p3 = sums[3] / h;
        Ok(HeatDerivs {
            log_h: h.ln(),
            ratios: [1.0, p1, p2, p3],
            w1: p2 - p1 * p1,
            w2: p1 * p3 - p2 * p2,
        })
    }

    /// A z-interval whose image under `H(., t)` covers `[x_min / 10, 10 x_max]`
    /// at `t = 0`, `T/2` and `T`.
    pub fn z_domain(&self, x_min: f64, x_max: f64) -> Result<(f64, f64)> {
        if !(x_min > 0.0 && x_max >= x_min) {
            return Err(Error::InvalidArgument(format!("bad wealth range [{x_min}, {x_max}]")));
        }
        let times = [0.0, 0.5 * self.horizon(), self.horizon()];
        let lo_target = (x_min / 10.0).ln();
        let hi_target = (10.0 * x_max).ln();

        let mut z_lo = -1.0_f64;
        let mut step = 1.0;
        let mut expansions = 0;
        while times
            .iter()
            .map(|&t| self.log_h(z_lo, t).map(|v| v.0))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .any(|lh| !(lh < lo_target))
        {
            z_lo -= step;
            step *= 2.0;
            expansions += 1;
            if expansions > 60 {
                return Err(Error::BracketExpansion {
                    x: x_min,
                    t: 0.0,
                    expansions,
                });
            }
        }

        let mut z_hi = 1.0_f64;
        step = 1.0;
        expansions = 0;
        while times
            .iter()
            .map(|&t| self.log_h(z_hi, t).map(|v| v.0))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .any(|lh| !(lh > hi_target))
        {
            z_hi += step;
            step *= 2.0;
            expansions += 1;
            if expansions > 60 {
                return Err(Error::BracketExpansion {
                    x: x_max,
                    t: 0.0,
                    expansions,
                });
            }
        }
        Ok((z_lo, z_hi))
    }

    /// Empirical constants in `n_k d^(k-1)H <= d^k H <= N_k d^(k-1)H` (k = 1, 2)
    /// and `|H_zzz| <= N_3 |H_zz|` over the grid.
    pub fn check_derivative_ratios(&self, z_grid: &[f64], t_grid: &[f64]) -> Result<RatioReport> {
        let mut report = RatioReport {
            lower_1: f64::INFINITY,
            upper_1: f64::NEG_INFINITY,
            lower_2: f64::INFINITY,
            upper_2: f64::NEG_INFINITY,
            upper_3: 0.0,
            non_finite: Vec::new(),
            points: 0,
        };
        for &t in t_grid {
            for &z in z_grid {
                let d = self.derivs(z, t)?;
                let [_, p1, p2, p3] = d.ratios;
                if p2 == 0.0 {
                    return Err(Error::ZeroDenominator { what: "H_zz", z, t });
                }
                let r1 = p1;
                let r2 = p2 / p1;
                let r3 = (p3 / p2).abs();
                if !(r1.is_finite() && r2.is_finite() && r3.is_finite()) {
                    report.non_finite.push(GridPoint { z, t });
                    continue;
                }
                report.lower_1 = report.lower_1.min(r1);
                report.upper_1 = report.upper_1.max(r1);
                report.lower_2 = report.lower_2.min(r2);
                report.upper_2 = report.upper_2.max(r2);
                report.upper_3 = report.upper_3.max(r3);
                report.points += 1;
            }
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub z: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub lower_1: f64,
    pub upper_1: f64,
    pub lower_2: f64,
    pub upper_2: f64,
    pub upper_3: f64,
    pub non_finite: Vec<GridPoint>,
    pub points: usize,
}

/// `h0(z) = exp(-z^2)` with derivatives up to order 3.
pub fn gaussian_terminal() -> ZFunction {
    ZFunction::new("gaussian", |z, n| {
        let g = (-z * z).exp();
        match n {
            0 => g,
            1 => -2.0 * z * g,
            2 => (4.0 * z * z - 2.0) * g,
            3 => (-8.0 * z * z * z + 12.0 * z) * g,
            _ => f64::NAN,
        }
    })
}

/// `h0(z) = sum_i w_i exp(y_i z)` as a plain z-function, so it can be pushed
/// through the quadrature path.
pub fn exp_sum_terminal(atoms: Vec<expsum::Atom>) -> ZFunction {
    ZFunction::new("exp-sum", move |z, n| {
        atoms
            .iter()
            .map(|a| a.weight * a.exponent.powi(n as i32) * (a.exponent * z).exp())
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expsum::Atom;
    use crate::fixtures;
    use std::f64::consts::E;

    fn market(lambda_sq: f64) -> MarketParams {
        MarketParams::with_lambda_sq(lambda_sq, 1.0).unwrap()
    }

    #[test]
    fn log_utility_closed_form() {
        let s = HeatSurface::new(fixtures::log_utility(), market(0.25)).unwrap();
        let v = s.eval_h(0.0, 0.0, 0).unwrap();
        assert!((v - 0.125f64.exp()).abs() < 1e-14);
        assert!((v - 1.13315).abs() < 1e-5);
    }

    #[test]
    fn mix23_terminal_and_evolved() {
        let s = HeatSurface::new(fixtures::mix23(), market(1.0)).unwrap();
        assert!((s.eval_h(0.0, 1.0, 1).unwrap() - 5.0).abs() < 1e-13);
        let v = s.eval_h(0.0, 0.5, 0).unwrap();
        let want = E + 2.25f64.exp();
        assert!((v - want).abs() < 1e-12);
        assert!((v - 12.20602).abs() < 1e-5);
    }

    #[test]
    fn rejects_time_outside_horizon() {
        let s = HeatSurface::new(fixtures::mix23(), market(1.0)).unwrap();
        assert!(matches!(s.eval_h(0.0, 1.5, 0), Err(Error::TimeOutOfRange { .. })));
        assert!(s.eval_h(0.0, 0.0, 4).is_err());
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let spec = fixtures::mix23();
        let closed = HeatSurface::new(spec.clone(), market(1.0)).unwrap();
        let quad = HeatSurface::quadrature(spec, market(1.0), 64).unwrap();
        for t in [0.0, 0.3, 0.5, 1.0] {
            for z in [-10.0, -3.0, 0.0, 2.5, 10.0] {
                let a = closed.derivs(z, t).unwrap();
                let b = quad.derivs(z, t).unwrap();
                for n in 0..=3 {
                    let rel = (a.derivative(n) - b.derivative(n)).abs() / a.derivative(n).abs();
                    assert!(rel < 1e-8, "z={z} t={t} n={n} rel={rel}");
                }
            }
        }
    }

    #[test]
    fn terminal_consistency() {
        for spec in [
            fixtures::mix23(),
            fixtures::log_utility(),
            fixtures::relative_curvature_inverse(),
        ] {
            let s = HeatSurface::new(spec.clone(), market(1.0)).unwrap();
            for z in [-3.0, -0.5, 0.0, 1.0, 4.0] {
                let h = s.eval_h(z, 1.0, 0).unwrap();
                let i = spec.eval_i((-z).exp(), 0).unwrap();
                assert!(((h - i) / i).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heat_residual_is_second_order() {
        // Quadrature surface of a non-power-sum datum; residual from central differences.
        let s = HeatSurface::new(fixtures::relative_curvature_inverse(), market(1.0)).unwrap();
        let lsq = s.lambda_sq();
        let res = |z: f64, t: f64, h: f64| {
            let ht = (s.eval_h(z, t + h, 0).unwrap() - s.eval_h(z, t - h, 0).unwrap()) / (2.0 * h);
            let hzz = (s.eval_h(z + h, t, 0).unwrap() - 2.0 * s.eval_h(z, t, 0).unwrap()
                + s.eval_h(z - h, t, 0).unwrap())
                / (h * h);
            (ht + 0.5 * lsq * hzz) / s.eval_h(z, t, 0).unwrap()
        };
        for (z, t) in [(-4.0, 0.5), (-2.0, 0.3), (0.0, 0.6)] {
            let a = res(z, t, 0.04).abs();
            let b = res(z, t, 0.02).abs();
            let order = (a / b).log2();
            assert!(order > 1.8, "z={z} t={t}: {a:e} {b:e} order {order}");
        }
    }

    #[test]
    fn positivity_of_first_two_derivatives() {
        let s = HeatSurface::new(fixtures::relative_curvature_inverse(), market(1.0)).unwrap();
        for t in [0.0, 0.5, 1.0] {
            for k in 0..40 {
                let z = -8.0 + 0.3 * k as f64;
                let d = s.derivs(z, t).unwrap();
                assert!(d.hz() > 0.0 && d.hzz() > 0.0, "z={z} t={t}");
            }
        }
    }

    #[test]
    fn derivative_ratio_examples() {
        let z: Vec<f64> = (0..41).map(|k| -10.0 + 0.5 * k as f64).collect();
        let t = [0.0, 0.5, 1.0];
        let r = HeatSurface::new(fixtures::mix23(), market(1.0))
            .unwrap()
            .check_derivative_ratios(&z, &t)
            .unwrap();
        for v in [r.lower_1, r.upper_1, r.lower_2, r.upper_2, r.upper_3] {
            assert!((2.0..=3.0).contains(&v), "{v}");
        }
        let r = HeatSurface::new(fixtures::power2(), market(1.0))
            .unwrap()
            .check_derivative_ratios(&z, &t)
            .unwrap();
        for v in [r.lower_1, r.upper_1, r.lower_2, r.upper_2, r.upper_3] {
            assert!((v - 2.0).abs() < 1e-13);
        }
        let spec = UtilitySpec::exp_sum(vec![Atom::new(1.5, 2.0), Atom::new(4.0, 1.0)]).unwrap();
        let r = HeatSurface::new(spec, market(1.0))
            .unwrap()
            .check_derivative_ratios(&z, &t)
            .unwrap();
        for v in [r.lower_1, r.upper_1, r.lower_2, r.upper_2, r.upper_3] {
            assert!((1.5..=4.0).contains(&v), "{v}");
        }
        assert!(r.non_finite.is_empty());
    }

    #[test]
    fn zero_second_derivative_is_reported() {
        let flat = ZFunction::new("linear", |z, n| match n {
            0 => 2.0 + z,
            1 => 1.0,
            _ => 0.0,
        });
        let s = HeatSurface::quadrature(flat, market(1.0), 64).unwrap();
        assert!(matches!(
            s.check_derivative_ratios(&[0.0], &[0.5]),
            Err(Error::ZeroDenominator { what: "H_zz", .. })
        ));
    }

    #[test]
    fn z_domain_brackets_wealth_range() {
        let s = HeatSurface::new(fixtures::mix23(), market(1.0)).unwrap();
        let (lo, hi) = s.z_domain(1e-3, 1e3).unwrap();
        for t in [0.0, 0.5, 1.0] {
            assert!(s.eval_h(lo, t, 0).unwrap() < 1e-4);
            assert!(s.eval_h(hi, t, 0).unwrap() > 1e4);
        }
    }

    #[test]
    fn truncated_quadrature_is_rejected() {
        // exp(z^2) grows too fast for the Gaussian kernel at large variance.
        let fast = ZFunction::new("fast", |z, _| (0.49 * z * z).exp());
        let s = HeatSurface::quadrature(fast, MarketParams::with_lambda_sq(1.0, 1.0).unwrap(), 32).unwrap();
        assert!(matches!(s.eval_h(0.0, 0.0, 0), Err(Error::QuadratureTruncation { .. })));
    }

    #[test]
    fn gaussian_datum_evolves_to_gaussian() {
        // h(z, t) = exp(-z^2 / (1 + 2v)) / sqrt(1 + 2v), v = |lambda|^2 (T - t).
        let s = HeatSurface::quadrature(gaussian_terminal(), market(1.0), 128).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let v: f64 = 1.0 - t;
            for z in [-3.0_f64, 0.0, 1.5] {
                let want = (-z * z / (1.0 + 2.0 * v)).exp() / (1.0 + 2.0 * v).sqrt();
                let got = s.eval_h(z, t, 0).unwrap();
                assert!(((got - want) / want).abs() < 1e-12, "t={t} z={z}");
            }
        }
    }
}
