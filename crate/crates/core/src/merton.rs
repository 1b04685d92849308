//! The investment problem behind the risk tolerance.
//!
//! Marginal value `u_x(H(z, t), t) = exp(-z - |lambda|^2 (T - t) / 2)`, the
//! optimal amounts `pi = sigma^-1 lambda r(x, t)` and a meter for the HJB
//! equation `u_t + |lambda|^2 u_x r / 2 = 0` (using `u_x / u_xx = -r`).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::heat::HeatSurface;
use crate::market::MarketParams;
use crate::transform::{self, Steps};

/// `u_x(x, t)`.
pub fn eval_u_x(surface: &HeatSurface, x: f64, t: f64) -> Result<f64> {
    let z = transform::invert_h(surface, x, t)?;
    Ok(u_x_at(surface, z, t))
}

fn u_x_at(surface: &HeatSurface, z: f64, t: f64) -> f64 {
    (-z - 0.5 * surface.lambda_sq() * (surface.horizon() - t)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySample {
    pub x: f64,
    pub t: f64,
    pub r: f64,
    /// Amount invested in each risky asset.
    pub pi: Vec<f64>,
    /// Total risky amount.
    pub total: f64,
    /// `max_i |(sigma pi - lambda r)_i|`.
    pub foc_residual: f64,
}

/// Optimal allocation at `(x, t)`. The market must carry the same
/// `|lambda|^2` as the surface.
pub fn eval_policy(surface: &HeatSurface, market: &MarketParams, x: f64, t: f64) -> Result<PolicySample> {
    let (a, b) = (market.lambda_sq(), surface.lambda_sq());
    if (a - b).abs() > 1e-12 * a.max(b).max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "market has |lambda|^2 = {a} but the surface was built for {b}"
        )));
    }
    let r = transform::eval_r(surface, x, t)?.r;
    Ok(policy_for(market, x, t, r))
}

/// The allocation for a given risk tolerance value.
pub fn policy_for(market: &MarketParams, x: f64, t: f64, r: f64) -> PolicySample {
    let pi = market.allocation_direction() * r;
    let foc = market.sigma() * &pi - market.lambda() * r;
    PolicySample {
        x,
        t,
        r,
        total: pi.sum(),
        foc_residual: foc.amax(),
        pi: pi.iter().copied().collect(),
    }
}

/// Trapezoidal `int_{x0}^{x} u_x(s, t) ds` on nodes equally spaced in
/// `log s`, at most `step` apart.
fn integrate_u_x(surface: &HeatSurface, x0: f64, x: f64, t: f64, step: f64) -> Result<f64> {
    let span = (x / x0).ln();
    let n = ((span.abs() / step).ceil() as usize).max(1);
    let mut seed = transform::invert_h(surface, x0, t)?;
    let mut acc = 0.0;
    for k in 0..=n {
        let s = x0 * (span * k as f64 / n as f64).exp();
        seed = transform::invert_h_from(surface, s, t, seed)?;
        // d s = s d(log s)
        let f = u_x_at(surface, seed, t) * s;
        acc += if k == 0 || k == n { 0.5 * f } else { f };
    }
    Ok(acc * span / n as f64)
}

/// `u_t + |lambda|^2 u_x r / 2` at `(x, t)` relative to the anchor `x0`:
/// `d/dt int_{x0}^x u_x ds + |lambda|^2 [u_x r]_{x0}^x / 2`. The value of `u`
/// at the anchor drops out, so only `u_x` is needed. `u_t` uses central
/// differences with `steps.t`, the integral uses log-spacing `steps.rel_x`.
pub fn hjb_residual(surface: &HeatSurface, x: f64, t: f64, x0: f64, steps: Steps) -> Result<f64> {
    if !(x > 0.0 && x0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need positive wealth, got x = {x}, x0 = {x0}"
        )));
    }
    if !(steps.rel_x > 0.0) || !(steps.t > 0.0) || t - steps.t < 0.0 || t + steps.t > surface.horizon() {
        return Err(Error::InvalidArgument(format!(
            "t = {t} with time step {} leaves [0, {}]",
            steps.t,
            surface.horizon()
        )));
    }
    let ht = steps.t;
    let up = integrate_u_x(surface, x0, x, t + ht, steps.rel_x)?;
    let down = integrate_u_x(surface, x0, x, t - ht, steps.rel_x)?;
    let u_t = (up - down) / (2.0 * ht);
    let flux = |x: f64| -> Result<f64> {
        let rt = transform::eval_r(surface, x, t)?;
        Ok(u_x_at(surface, rt.z, t) * rt.r)
    };
    Ok(u_t + 0.5 * surface.lambda_sq() * (flux(x)? - flux(x0)?))
}

/// Median of a wealth grid, the default anchor.
pub fn median_anchor(x_grid: &[f64]) -> Result<f64> {
    let pos: Vec<f64> = x_grid.iter().copied().filter(|&x| x > 0.0).collect();
    if pos.is_empty() {
        return Err(Error::InvalidArgument("grid has no positive wealth".into()));
    }
    Ok(pos[pos.len() / 2])
}

/// `-u_x / u_xx` with `u_xx` from central differences of `u_x` with step
/// `rel_step * x`.
pub fn risk_tolerance_from_u_x(surface: &HeatSurface, x: f64, t: f64, rel_step: f64) -> Result<f64> {
    let h = rel_step * x;
    let u_xx = (eval_u_x(surface, x + h, t)? - eval_u_x(surface, x - h, t)?) / (2.0 * h);
    Ok(-eval_u_x(surface, x, t)? / u_xx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::transform::refine;

    fn surf(spec: crate::UtilitySpec, l2: f64) -> HeatSurface {
        HeatSurface::new(spec, MarketParams::with_lambda_sq(l2, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn marginal_utility_examples() {
        let log = surf(fixtures::log_utility(), 0.25);
        let v = eval_u_x(&log, 0.125f64.exp(), 0.0).unwrap();
        assert!((v - (-0.125f64).exp()).abs() < 1e-14);
        let p2 = surf(fixtures::power2(), 1.0);
        let v = eval_u_x(&p2, 1f64.exp(), 0.5).unwrap();
        assert!((v - (-0.25f64).exp()).abs() < 1e-14, "{v}");
        let mix = surf(fixtures::mix23(), 1.0);
        for z0 in [-1.0f64, 0.0, 2.0] {
            let x = fixtures::mix23().eval_i((-z0).exp(), 0).unwrap();
            assert!((eval_u_x(&mix, x, 1.0).unwrap() - (-z0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_utility_decreases_with_inada_limits() {
        let mix = surf(fixtures::mix23(), 1.0);
        let x = crate::preferences::log_grid(1e-8, 1e8, 81);
        let u: Vec<f64> = x.iter().map(|&x| eval_u_x(&mix, x, 0.3).unwrap()).collect();
        assert!(u.windows(2).all(|w| w[1] < w[0]));
        assert!(
            u[0] > 1e3 && *u.last().unwrap() < 1e-2,
            "{} {}",
            u[0],
            u.last().unwrap()
        );
    }

    #[test]
    fn merton_fraction() {
        let market = MarketParams::new(&[vec![0.2]], &[0.07], 0.03, 1.0).unwrap();
        let log = HeatSurface::new(fixtures::log_utility(), market.clone()).unwrap();
        for x in [0.5, 1.0, 7.0] {
            let p = eval_policy(&log, &market, x, 0.4).unwrap();
            assert!((p.pi[0] / x - 1.0).abs() < 1e-10);
            assert!(p.foc_residual < 1e-14);
        }
        let p2 = HeatSurface::new(fixtures::power2(), market.clone()).unwrap();
        let p = eval_policy(&p2, &market, 3.0, 0.4).unwrap();
        assert!((p.pi[0] - 6.0).abs() < 1e-10);
        assert!(eval_policy(&p2, &MarketParams::with_lambda_sq(0.5, 1.0).unwrap(), 3.0, 0.4).is_err());
    }

    #[test]
    fn zero_market_price_of_risk() {
        let market = MarketParams::new(&[vec![0.2]], &[0.03], 0.03, 1.0).unwrap();
        let mix = HeatSurface::new(fixtures::mix23(), market.clone()).unwrap();
        let p = eval_policy(&mix, &market, 2.0, 0.5).unwrap();
        assert_eq!(p.pi, vec![0.0]);
        assert_eq!(p.total, 0.0);
        let steps = Steps { rel_x: 1e-2, t: 1e-2 };
        assert!(hjb_residual(&mix, 3.0, 0.5, 1.0, steps).unwrap().abs() < 1e-12);
    }

    #[test]
    fn policy_is_linear_in_r() {
        let market = MarketParams::new(&[vec![0.2, 0.0], vec![0.05, 0.3]], &[0.08, 0.06], 0.02, 1.0).unwrap();
        let mix = HeatSurface::new(fixtures::mix23(), market.clone()).unwrap();
        let dir = market.allocation_direction();
        for x in [0.5, 4.0] {
            let p = eval_policy(&mix, &market, x, 0.2).unwrap();
            for (pi, d) in p.pi.iter().zip(dir.iter()) {
                assert!((pi - d * p.r).abs() < 1e-13 * p.r);
            }
            assert!(p.foc_residual < 1e-12);
        }
    }

    #[test]
    fn hjb_residuals() {
        let log = surf(fixtures::log_utility(), 0.04);
        let steps = Steps { rel_x: 1e-2, t: 1e-2 };
        assert!(hjb_residual(&log, 3.0, 0.5, 1.0, steps).unwrap().abs() < 1e-9);
        let p2 = surf(fixtures::power2(), 1.0);
        let r = refine(
            |s| hjb_residual(&p2, 4.0, 0.5, 1.5, s),
            Steps { rel_x: 4e-2, t: 4e-2 },
            3,
        )
        .unwrap();
        assert!(r.min_order() > 1.8, "{r:?}");
        assert_eq!(median_anchor(&[0.0, 1.0, 2.0, 3.0]).unwrap(), 2.0);
    }

    #[test]
    fn risk_tolerance_from_marginal_utility() {
        let mix = surf(fixtures::mix23(), 1.0);
        let exact = transform::eval_r(&mix, 5.0, 0.3).unwrap().r;
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&h| (risk_tolerance_from_u_x(&mix, 5.0, 0.3, h).unwrap() - exact).abs())
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "{errs:?}");
        }
    }
}
