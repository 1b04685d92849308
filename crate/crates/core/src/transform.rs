//! From the harmonic function to the risk tolerance.
//!
//! With `z = H^-1(x, t)`:
//! `r = H_z`, `r_x = H_zz / H_z`, `r_xx = (H_z H_zzz - H_zz^2) / H_z^3`.
//! The relative risk tolerance is `r / x = (log H)_z` and the risk aversion is
//! `1 / r`. The residual meters probe the three PDEs these quantities solve.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heat::{HeatDerivs, HeatSurface};
use crate::roots::{self, RootFailure, RootOptions};
use crate::surface::{Provenance, RTSurface};

/// The unique `z` with `H(z, t) = x`.
pub fn invert_h(surface: &HeatSurface, x: f64, t: f64) -> Result<f64> {
    invert_h_from(surface, x, t, 0.0)
}

/// As [`invert_h`], starting the bracket search at `seed`.
pub fn invert_h_from(surface: &HeatSurface, x: f64, t: f64, seed: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("wealth must be positive, got {x}")));
    }
    surface.market().check_time(t)?;
    let target = x.ln();
    let mut failure = None;
    let z = roots::solve_increasing(
        |z| match surface.log_h(z, t) {
            Ok((lh, dlh)) => (lh - target, dlh),
            Err(e) => {
                failure.get_or_insert(e);
                (f64::NAN, f64::NAN)
            }
        },
        seed,
        &RootOptions::default(),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    z.map_err(|f| match f {
        RootFailure::Bracket { expansions } => Error::BracketExpansion { x, t, expansions },
        RootFailure::NoConvergence { iterations } => Error::NoConvergence { target: x, iterations },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskTolerance {
    pub z: f64,
    pub r: f64,
    pub r_x: f64,
    pub r_xx: f64,
}

impl RiskTolerance {
    pub fn from_derivs(z: f64, d: &HeatDerivs) -> Self {
        let [_, p1, p2, _] = d.ratios;
        let h = d.h();
        Self {
            z,
            r: h * p1,
            r_x: p2 / p1,
            r_xx: d.w2 / (p1 * p1 * p1 * h),
        }
    }
}

pub fn eval_r(surface: &HeatSurface, x: f64, t: f64) -> Result<RiskTolerance> {
    let z = invert_h(surface, x, t)?;
    Ok(RiskTolerance::from_derivs(z, &surface.derivs(z, t)?))
}

/// `r / x` and its first two wealth derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeRiskTolerance {
    pub value: f64,
    pub x_derivative: f64,
    pub xx_derivative: f64,
}

impl RelativeRiskTolerance {
    pub fn from_derivs(d: &HeatDerivs) -> Self {
        // g = log H: r~ = g_z, r~_x = g_zz / H_z, r~_xx = (g_zzz H_z - g_zz H_zz) / H_z^3.
        let [_, p1, p2, _] = d.ratios;
        let h = d.h();
        Self {
            value: p1,
            x_derivative: d.w1 / (h * p1),
            xx_derivative: (d.log_h_zzz() * p1 - d.w1 * p2) / (p1 * p1 * p1 * h * h),
        }
    }
}

pub fn eval_relative_r(surface: &HeatSurface, x: f64, t: f64) -> Result<RelativeRiskTolerance> {
    let z = invert_h(surface, x, t)?;
    Ok(RelativeRiskTolerance::from_derivs(&surface.derivs(z, t)?))
}

/// Risk aversion `1 / r`.
pub fn eval_gamma(surface: &HeatSurface, x: f64, t: f64) -> Result<f64> {
    Ok(eval_r(surface, x, t)?.r.recip())
}

/// `G = H_zzz / H_zz - H_zz / H_z`, which has the sign of `r_xx` at `x = H(z, t)`.
pub fn eval_g(surface: &HeatSurface, z: f64, t: f64) -> Result<f64> {
    let d = surface.derivs(z, t)?;
    g_from_derivs(&d).ok_or(Error::ZeroDenominator { what: "H_zz", z, t })
}

pub fn g_from_derivs(d: &HeatDerivs) -> Option<f64> {
    let [_, p1, p2, _] = d.ratios;
    if p2 == 0.0 {
        None
    } else {
        Some(d.w2 / (p1 * p2))
    }
}

/// Difference steps for the residual meters: `h_x = rel_x * x`, `h_t` absolute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Steps {
    pub rel_x: f64,
    pub t: f64,
}

impl Steps {
    pub fn default_for(horizon: f64) -> Self {
        Self {
            rel_x: 1e-3,
            t: 1e-3 * horizon,
        }
    }

    pub fn halved(self) -> Self {
        Self {
            rel_x: 0.5 * self.rel_x,
            t: 0.5 * self.t,
        }
    }
}

fn check_interior(surface: &HeatSurface, x: f64, t: f64, steps: Steps) -> Result<f64> {
    if !(x > 0.0) || !(steps.rel_x > 0.0 && steps.rel_x < 1.0) || !(steps.t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "residual meters need x > 0 and small positive steps, got x = {x}, {steps:?}"
        )));
    }
    if t - steps.t < 0.0 || t + steps.t > surface.horizon() {
        return Err(Error::InvalidArgument(format!(
            "t = {t} is too close to [0, {}] for a time step of {}",
            surface.horizon(),
            steps.t
        )));
    }
    Ok(steps.rel_x * x)
}

/// `r_t + |lambda|^2 r^2 r_xx / 2` with `r_t` from central time differences.
pub fn black_residual_at(surface: &HeatSurface, x: f64, t: f64, steps: Steps) -> Result<f64> {
    check_interior(surface, x, t, steps)?;
    let ht = steps.t;
    let r_t = (eval_r(surface, x, t + ht)?.r - eval_r(surface, x, t - ht)?.r) / (2.0 * ht);
    let c = eval_r(surface, x, t)?;
    Ok(r_t + 0.5 * surface.lambda_sq() * c.r * c.r * c.r_xx)
}

/// Burgers residual `v_t + |lambda|^2 v_zz / 2 + |lambda|^2 v v_z` of the
/// relative risk tolerance read along the transform variable,
/// `v(z, t) = r~(H(z, t), t)`, at the `z` carrying wealth `x` at time `t`.
/// Differences are taken in `z` with step `steps.rel_x` and in `t`.
///
/// In the wealth variable itself `r~` solves
/// `r~_t + |lambda|^2 x r~^2 (2 r~_x + x r~_xx) / 2 = 0` instead; see
/// [`relative_residual`].
pub fn burgers_residual(surface: &HeatSurface, x: f64, t: f64, steps: Steps) -> Result<f64> {
    check_interior(surface, x, t, steps)?;
    let (hz, ht) = (steps.rel_x, steps.t);
    let z = invert_h(surface, x, t)?;
    let v = |z: f64, t: f64| -> Result<f64> {
        let x = surface.eval_h(z, t, 0)?;
        Ok(eval_relative_r(surface, x, t)?.value)
    };
    let c = v(z, t)?;
    let (left, right) = (v(z - hz, t)?, v(z + hz, t)?);
    let vt = (v(z, t + ht)? - v(z, t - ht)?) / (2.0 * ht);
    let vz = (right - left) / (2.0 * hz);
    let vzz = (right - 2.0 * c + left) / (hz * hz);
    let l2 = surface.lambda_sq();
    Ok(vt + 0.5 * l2 * vzz + l2 * c * vz)
}

/// `r~_t + |lambda|^2 x r~^2 (2 r~_x + x r~_xx) / 2`, the equation `r / x`
/// inherits from Black's equation, by central differences in `x` and `t`.
pub fn relative_residual(surface: &HeatSurface, x: f64, t: f64, steps: Steps) -> Result<f64> {
    let hx = check_interior(surface, x, t, steps)?;
    let ht = steps.t;
    let f = |x: f64, t: f64| eval_relative_r(surface, x, t).map(|v| v.value);
    let c = f(x, t)?;
    let (left, right) = (f(x - hx, t)?, f(x + hx, t)?);
    let rt = (f(x, t + ht)? - f(x, t - ht)?) / (2.0 * ht);
    let rx = (right - left) / (2.0 * hx);
    let rxx = (right - 2.0 * c + left) / (hx * hx);
    Ok(rt + 0.5 * surface.lambda_sq() * x * c * c * (2.0 * rx + x * rxx))
}

/// `gamma_t - |lambda|^2 (1/gamma)_xx / 2` by central differences.
pub fn pme_residual(surface: &HeatSurface, x: f64, t: f64, steps: Steps) -> Result<f64> {
    let hx = check_interior(surface, x, t, steps)?;
    let ht = steps.t;
    let gt = (eval_gamma(surface, x, t + ht)? - eval_gamma(surface, x, t - ht)?) / (2.0 * ht);
    let r = |x: f64| eval_r(surface, x, t).map(|v| v.r);
    let rxx = (r(x + hx)? - 2.0 * r(x)? + r(x - hx)?) / (hx * hx);
    Ok(gt - 0.5 * surface.lambda_sq() * rxx)
}

/// Residual magnitudes at successively halved steps and the observed orders
/// between consecutive levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub residuals: Vec<f64>,
    pub orders: Vec<f64>,
}

impl Refinement {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runs `meter` at `steps`, `steps / 2`, ... (`levels` evaluations in all).
pub fn refine<F>(mut meter: F, steps: Steps, levels: usize) -> Result<Refinement>
where
    F: FnMut(Steps) -> Result<f64>,
{
    let mut s = steps;
    let mut residuals = Vec::with_capacity(levels);
    for _ in 0..levels.max(2) {
        residuals.push(meter(s)?.abs());
        s = s.halved();
    }
    let orders = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(Refinement { residuals, orders })
}

/// Transform surface on the given grids. Nodes at `x = 0` store `r = 0` and
/// one-sided derivatives of the neighbouring values.
pub fn build_surface(surface: &HeatSurface, x_grid: &[f64], t_grid: &[f64]) -> Result<RTSurface> {
    crate::grid::check_increasing("x", x_grid)?;
    crate::grid::check_increasing("t", t_grid)?;
    if x_grid.len() < 3 {
        return Err(Error::InvalidArgument("x grid needs at least three nodes".into()));
    }
    if x_grid[0] < 0.0 {
        return Err(Error::InvalidArgument("x grid must be non-negative".into()));
    }
    let rows: Vec<Vec<RiskTolerance>> = t_grid
        .par_iter()
        .map(|&t| {
            let mut seed = 0.0;
            x_grid
                .iter()
                .map(|&x| {
                    if x == 0.0 {
                        return Ok(RiskTolerance {
                            z: f64::NEG_INFINITY,
                            r: 0.0,
                            r_x: f64::NAN,
                            r_xx: f64::NAN,
                        });
                    }
                    let z = invert_h_from(surface, x, t, seed)?;
                    seed = z;
                    Ok(RiskTolerance::from_derivs(z, &surface.derivs(z, t)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let shape = (t_grid.len(), x_grid.len());
    let mut r = Array2::from_shape_fn(shape, |(i, j)| rows[i][j].r);
    let mut r_x = Array2::from_shape_fn(shape, |(i, j)| rows[i][j].r_x);
    let mut r_xx = Array2::from_shape_fn(shape, |(i, j)| rows[i][j].r_xx);
    if x_grid[0] == 0.0 {
        for i in 0..shape.0 {
            let row: Vec<f64> = r.row(i).to_vec();
            r[[i, 0]] = 0.0;
            r_x[[i, 0]] = crate::grid::d1(x_grid, &row, 0);
            r_xx[[i, 0]] = crate::grid::d2(x_grid, &row, 0);
        }
    }
    RTSurface::new(
        x_grid.to_vec(),
        t_grid.to_vec(),
        r,
        r_x,
        r_xx,
        Provenance::Transform,
        surface.lambda_sq(),
        surface.horizon(),
    )
}
