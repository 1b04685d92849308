//! Direct finite-difference solvers in time to horizon `tau = T - t`:
//!
//! * Black's equation `r_tau = |lambda|^2 r^2 r_xx / 2`,
//! * the semilinear equation for `F = r^2`,
//!   `F_tau = |lambda|^2 F F_xx / 2 - |lambda|^2 F_x^2 / 4`.
//!
//! Results live on a uniform grid over `[0, x_max]` with `r(0) = F(0) = 0`.
//! Internally the grid continues past `x_max` with geometrically growing
//! cells up to `x_max * e^buffer`, where `r_xx = 0` is imposed. In log-wealth
//! the equation diffuses at a rate of order `|lambda|^2 (r/x)^2`, so the far
//! boundary has to sit many e-folds away for its error not to reach
//! `[0, x_max]`.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid;
use crate::preferences::UtilitySpec;
use crate::surface::{Provenance, RTSurface};

/// Default log-distance from `x_max` to the far boundary.
pub const DEFAULT_BUFFER: f64 = 15.0;

/// Growth factor of consecutive cells in the buffer.
const BUFFER_RATIO: f64 = 1.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Explicit,
    SemiImplicit,
}

type TerminalFn = dyn Fn(f64) -> Result<f64> + Send + Sync;

#[derive(Clone)]
pub struct FdConfig {
    pub x_max: f64,
    /// Number of intervals in x on `[0, x_max]`.
    pub nx: usize,
    /// Number of steps in time.
    pub nt: usize,
    pub scheme: Scheme,
    pub lambda_sq: f64,
    pub horizon: f64,
    /// One-sided differences for the gradient term of the F equation.
    pub upwind_gradient: bool,
    /// `log(x_far / x_max)`; zero puts the `r_xx = 0` boundary at `x_max`.
    pub buffer: f64,
    terminal: Arc<TerminalFn>,
    /// Largest wealth at which the terminal datum is available.
    terminal_limit: f64,
}

impl fmt::Debug for FdConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FdConfig")
            .field("x_max", &self.x_max)
            .field("nx", &self.nx)
            .field("nt", &self.nt)
            .field("scheme", &self.scheme)
            .field("lambda_sq", &self.lambda_sq)
            .field("horizon", &self.horizon)
            .field("upwind_gradient", &self.upwind_gradient)
            .field("buffer", &self.buffer)
            .finish()
    }
}

impl FdConfig {
    /// Terminal risk tolerance given as a function of wealth.
    pub fn new<F>(x_max: f64, nx: usize, nt: usize, lambda_sq: f64, horizon: f64, r: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(
            x_max,
            nx,
            nt,
            lambda_sq,
            horizon,
            Arc::new(move |x| Ok(r(x))),
            f64::INFINITY,
        )
    }

    /// Terminal risk tolerance of a utility spec. Tabulated data cap the
    /// buffer at the end of the table.
    pub fn from_spec(
        spec: &UtilitySpec,
        x_max: f64,
        nx: usize,
        nt: usize,
        lambda_sq: f64,
        horizon: f64,
    ) -> Result<Self> {
        let limit = match spec {
            UtilitySpec::TabulatedR(t) => t.range().1,
            _ => f64::INFINITY,
        };
        let spec = spec.clone();
        let f = move |x: f64| if x == 0.0 { Ok(0.0) } else { spec.eval_r_terminal(x) };
        Self::build(x_max, nx, nt, lambda_sq, horizon, Arc::new(f), limit)
    }

    fn build(
        x_max: f64,
        nx: usize,
        nt: usize,
        lambda_sq: f64,
        horizon: f64,
        terminal: Arc<TerminalFn>,
        terminal_limit: f64,
    ) -> Result<Self> {
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(Error::InvalidArgument(format!("x_max must be positive, got {x_max}")));
        }
        if nx < 32 || nt < 32 {
            return Err(Error::InvalidArgument(format!(
                "need nx >= 32 and nt >= 32, got {nx} and {nt}"
            )));
        }
        if !(lambda_sq >= 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidArgument("need |lambda|^2 >= 0 and T > 0".into()));
        }
        if terminal_limit < x_max {
            return Err(Error::Precondition(format!(
                "terminal data end at {terminal_limit}, before x_max = {x_max}"
            )));
        }
        let cfg = Self {
            x_max,
            nx,
            nt,
            scheme: Scheme::SemiImplicit,
            lambda_sq,
            horizon,
            upwind_gradient: false,
            buffer: DEFAULT_BUFFER,
            terminal,
            terminal_limit,
        };
        cfg.terminal_samples()?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_buffer(mut self, buffer: f64) -> Self {
        self.buffer = buffer.max(0.0);
        self
    }

    pub fn with_upwind_gradient(mut self, upwind: bool) -> Self {
        self.upwind_gradient = upwind;
        self
    }

    /// Output grid: `nx + 1` uniform nodes on `[0, x_max]`.
    pub fn x_grid(&self) -> Vec<f64> {
        grid::uniform(0.0, self.x_max, self.nx)
    }

    /// Computational grid: the output grid followed by the buffer.
    pub fn full_grid(&self) -> Vec<f64> {
        let mut x = self.x_grid();
        let far = (self.x_max * self.buffer.exp()).min(self.terminal_limit);
        let mut h = self.dx();
        let mut last = self.x_max;
        while last < far {
            h *= BUFFER_RATIO;
            last = if last + 1.5 * h > far { far } else { last + h };
            x.push(last);
        }
        x
    }

    /// Calendar times, ascending; surface row `k` is at `t_k`.
    pub fn t_grid(&self) -> Vec<f64> {
        grid::uniform(0.0, self.horizon, self.nt)
    }

    pub fn dx(&self) -> f64 {
        self.x_max / self.nx as f64
    }

    pub fn dtau(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// Terminal risk tolerance on the computational grid, validated.
    pub fn terminal_samples(&self) -> Result<Vec<f64>> {
        let x = self.full_grid();
        let r = x.iter().map(|&x| (self.terminal)(x)).collect::<Result<Vec<_>>>()?;
        if r[0] != 0.0 {
            return Err(Error::Precondition(format!(
                "terminal value at x = 0 is {}, not 0",
                r[0]
            )));
        }
        if let Some(k) = r.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::Precondition(format!(
                "terminal risk tolerance must be finite and strictly increasing (fails at x = {})",
                x[k + 1]
            )));
        }
        Ok(r)
    }

    /// Terminal risk tolerance on the output grid.
    pub fn terminal(&self) -> Result<Vec<f64>> {
        let mut r = self.terminal_samples()?;
        r.truncate(self.nx + 1);
        Ok(r)
    }

    /// Default tolerance for sign checks on surfaces from this grid.
    pub fn tolerance(&self) -> f64 {
        10.0 * (self.dx() * self.dx() + self.dtau())
    }

    /// Verifies the terminal slope varies by less than 1% over the last tenth
    /// of `[0, x_max]`.
    pub fn check_linear_tail(&self) -> Result<()> {
        let x = self.x_grid();
        let r = self.terminal()?;
        let n = self.nx;
        let k = n - (n / 10).max(2);
        let s_end = grid::d1(&x, &r, n);
        let s_mid = grid::d1(&x, &r, k);
        let drift = ((s_end - s_mid) / s_end).abs();
        if drift < 1e-2 {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "terminal slope changes by {:.2}% over [{}, {}]; increase x_max",
                100.0 * drift,
                x[k],
                x[n]
            )))
        }
    }
}

/// Solves `a_i u_{i-1} + b_i u_i + c_i u_{i+1} = d_i`; `a_0` and `c_{n-1}` are
/// ignored. Returns the failing row on a vanishing pivot.
pub fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> std::result::Result<Vec<f64>, usize> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for i in 0..n {
        let (lo, prev_c, prev_d) = if i == 0 {
            (0.0, 0.0, 0.0)
        } else {
            (a[i], cp[i - 1], dp[i - 1])
        };
        let pivot = b[i] - lo * prev_c;
        if !(pivot.abs() > 1e-300) || !pivot.is_finite() {
            return Err(i);
        }
        cp[i] = if i + 1 < n { c[i] / pivot } else { 0.0 };
        dp[i] = (d[i] - lo * prev_d) / pivot;
    }
    let mut u = dp;
    for i in (0..n - 1).rev() {
        u[i] -= cp[i] * u[i + 1];
    }
    Ok(u)
}

fn check_positive(step: usize, v: &[f64]) -> Result<()> {
    match v.iter().skip(1).position(|&r| !(r > 0.0)) {
        Some(k) => Err(Error::PositivityLost {
            step,
            node: k + 1,
            value: v[k + 1],
        }),
        None => Ok(()),
    }
}

/// Weights of `u_{i-1}, u_i, u_{i+1}` in the second difference at node `i`.
fn d2_weights(x: &[f64], i: usize) -> [f64; 3] {
    let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
    let lo = 2.0 / (h1 * (h1 + h2));
    let hi = 2.0 / (h2 * (h1 + h2));
    [lo, -(lo + hi), hi]
}

/// Weights of `u_{i-1}, u_i, u_{i+1}` in the first difference at node `i`.
fn d1_weights(upwind: bool, x: &[f64], f: &[f64], i: usize) -> [f64; 3] {
    let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
    if !upwind {
        [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))]
    } else if f[i + 1] >= f[i - 1] {
        [-1.0 / h1, 1.0 / h1, 0.0]
    } else {
        [0.0, -1.0 / h2, 1.0 / h2]
    }
}

fn apply(w: [f64; 3], u: &[f64], i: usize) -> f64 {
    w[0] * u[i - 1] + w[1] * u[i] + w[2] * u[i + 1]
}

/// Largest stable explicit step for `u_tau = coeff(i) u_xx`.
fn explicit_bound(x: &[f64], coeff: impl Fn(usize) -> f64) -> f64 {
    (1..x.len() - 1)
        .map(|i| {
            let h = (x[i] - x[i - 1]).min(x[i + 1] - x[i]);
            h * h / (2.0 * coeff(i)).max(f64::MIN_POSITIVE)
        })
        .fold(f64::INFINITY, f64::min)
}

/// One time step of `u_tau = D(u) u_xx - A(u) u_x^2`. `diffusion(u_i)` and
/// `advection(u_i)` are the coefficients. The semi-implicit scheme lags the
/// coefficients and linearizes `u_x^2` as `u_x(old) u_x(new)`.
fn step(
    cfg: &FdConfig,
    x: &[f64],
    u: &[f64],
    n: usize,
    diffusion: impl Fn(f64) -> f64,
    advection: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    let m = x.len();
    let dt = cfg.dtau();
    let next = match cfg.scheme {
        Scheme::Explicit => {
            let bound = explicit_bound(x, |i| diffusion(u[i]));
            if dt > bound {
                return Err(Error::CflViolation {
                    step: n,
                    dtau: dt,
                    bound,
                });
            }
            let mut next = u.to_vec();
            for i in 1..m - 1 {
                let uxx = apply(d2_weights(x, i), u, i);
                let ux = apply(d1_weights(cfg.upwind_gradient, x, u, i), u, i);
                next[i] = u[i] + dt * (diffusion(u[i]) * uxx - advection(u[i]) * ux * ux);
            }
            next
        }
        Scheme::SemiImplicit => {
            let (mut a, mut b, mut c) = (vec![0.0; m], vec![1.0; m], vec![0.0; m]);
            let mut d = u.to_vec();
            d[0] = 0.0;
            for i in 1..m - 1 {
                let k = dt * diffusion(u[i]);
                let w2 = d2_weights(x, i);
                let mut row = [-k * w2[0], 1.0 - k * w2[1], -k * w2[2]];
                let adv = advection(u[i]);
                if adv != 0.0 {
                    let w1 = d1_weights(cfg.upwind_gradient, x, u, i);
                    let g = dt * adv * apply(w1, u, i);
                    for (r, w) in row.iter_mut().zip(w1) {
                        *r += g * w;
                    }
                }
                a[i] = row[0];
                b[i] = row[1];
                c[i] = row[2];
            }
            thomas(&a, &b, &c, &d).map_err(|row| Error::TridiagonalFailure { step: n, row })?
        }
    };
    check_positive(n, &next)?;
    Ok(next)
}

/// Marches from `tau = 0` and returns the output part of the solution in
/// ascending calendar time.
fn march(
    cfg: &FdConfig,
    terminal: Vec<f64>,
    diffusion: impl Fn(f64) -> f64 + Copy,
    advection: impl Fn(f64) -> f64 + Copy,
) -> Result<RTSurface> {
    let full = cfg.full_grid();
    let x = cfg.x_grid();
    let t = cfg.t_grid();
    let shape = (t.len(), x.len());
    let mut r = Array2::zeros(shape);
    let mut r_x = Array2::zeros(shape);
    let mut r_xx = Array2::zeros(shape);
    let mut store = |row: usize, u: &[f64]| {
        for j in 0..x.len() {
            r[[row, j]] = u[j];
            r_x[[row, j]] = grid::d1(&full, u, j);
            r_xx[[row, j]] = grid::d2(&full, u, j);
        }
    };
    let mut u = terminal;
    store(cfg.nt, &u);
    for n in 1..=cfg.nt {
        u = step(cfg, &full, &u, n, diffusion, advection)?;
        store(cfg.nt - n, &u);
    }
    RTSurface::new(
        x,
        t,
        r,
        r_x,
        r_xx,
        Provenance::FiniteDifference,
        cfg.lambda_sq,
        cfg.horizon,
    )
}

/// Black's equation backward from `r(x, T) = R(x)`.
pub fn solve_black(cfg: &FdConfig) -> Result<RTSurface> {
    let half = 0.5 * cfg.lambda_sq;
    march(cfg, cfg.terminal_samples()?, move |r| half * r * r, |_| 0.0)
}

/// The `F = r^2` equation backward from `F(x, T) = R(x)^2`. The returned
/// surface holds `F` (not `r`) with its derivatives.
pub fn solve_f(cfg: &FdConfig) -> Result<RTSurface> {
    let l2 = cfg.lambda_sq;
    let f = cfg.terminal_samples()?.iter().map(|r| r * r).collect();
    march(cfg, f, move |f| 0.5 * l2 * f, move |_| 0.25 * l2)
}

/// `sqrt(F)` on the grid of an F surface.
pub fn sqrt_values(f: &RTSurface) -> Array2<f64> {
    f.r().mapv(|v| v.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn thomas_solves_small_system() {
        // [2 1 0; 1 3 1; 0 1 2] u = [3, 5, 3] -> u = [1, 1, 1]
        let u = thomas(&[0.0, 1.0, 1.0], &[2.0, 3.0, 2.0], &[1.0, 1.0, 0.0], &[3.0, 5.0, 3.0]).unwrap();
        for v in u {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert_eq!(thomas(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]), Err(0));
    }

    #[test]
    fn buffer_grid_shape() {
        let cfg = FdConfig::new(50.0, 512, 32, 1.0, 1.0, |x| 2.0 * x).unwrap();
        let x = cfg.full_grid();
        assert_eq!(x[512], 50.0);
        assert_eq!(*x.last().unwrap(), 50.0 * DEFAULT_BUFFER.exp());
        assert!(x.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(cfg.with_buffer(0.0).full_grid().len(), 513);
    }

    #[test]
    fn linear_data_are_fixed_points() {
        for slope in [1.0, 2.0] {
            let cfg = FdConfig::new(10.0, 64, 64, 1.0, 1.0, move |x| slope * x).unwrap();
            let s = solve_black(&cfg).unwrap();
            for (&v, &x) in s.r().row(0).iter().zip(s.x()) {
                assert!((v - slope * x).abs() < 1e-9 * (1.0 + x), "{v} vs {}", slope * x);
            }
            let f = solve_f(&cfg).unwrap();
            for (&v, &x) in f.r().row(0).iter().zip(f.x()) {
                assert!((v - slope * slope * x * x).abs() < 1e-9 * (1.0 + x * x));
            }
        }
    }

    #[test]
    fn explicit_scheme_enforces_cfl() {
        let cfg = FdConfig::new(10.0, 64, 64, 1.0, 1.0, |x| 2.0 * x)
            .unwrap()
            .with_buffer(0.0)
            .with_scheme(Scheme::Explicit);
        assert!(matches!(solve_black(&cfg), Err(Error::CflViolation { step: 1, .. })));
        let cfg = FdConfig::new(2.0, 32, 4000, 1.0, 1.0, fixtures::conc_r)
            .unwrap()
            .with_buffer(0.0)
            .with_scheme(Scheme::Explicit);
        let explicit = solve_black(&cfg).unwrap();
        let implicit = solve_black(&cfg.clone().with_scheme(Scheme::SemiImplicit)).unwrap();
        assert!(explicit.sup_relative_diff(&implicit).unwrap() < 1e-3);
    }

    #[test]
    fn rejects_bad_terminal_data() {
        assert!(FdConfig::new(10.0, 16, 64, 1.0, 1.0, |x| x).is_err());
        assert!(matches!(
            FdConfig::new(10.0, 64, 64, 1.0, 1.0, |x| x + 1.0),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            FdConfig::new(10.0, 64, 64, 1.0, 1.0, |x| -x),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn linear_tail_check() {
        let ok = FdConfig::new(20.0, 64, 64, 1.0, 1.0, fixtures::conc_r).unwrap();
        assert!(ok.check_linear_tail().is_ok());
        let bad = FdConfig::new(20.0, 64, 64, 1.0, 1.0, |x| x * x + x).unwrap();
        assert!(bad.check_linear_tail().is_err());
    }

    #[test]
    fn concave_solution_rises_toward_horizon() {
        let cfg = FdConfig::new(20.0, 64, 64, 1.0, 1.0, fixtures::conc_r).unwrap();
        let s = solve_black(&cfg).unwrap();
        let last = s.t().len() - 1;
        for j in 1..s.x().len() {
            assert!(s.r()[[0, j]] <= s.r()[[last, j]] + 1e-12);
        }
    }

    #[test]
    fn square_matches_black() {
        let cfg = FdConfig::from_spec(&fixtures::mix23(), 50.0, 128, 128, 1.0, 1.0).unwrap();
        let r = solve_black(&cfg).unwrap();
        let f = solve_f(&cfg).unwrap();
        let diff = r.sup_relative_diff_values(f.x(), f.t(), &sqrt_values(&f)).unwrap();
        assert!(diff < 5e-3, "{diff}");
    }

    #[test]
    fn tabulated_terminal_limits_buffer() {
        let grid = crate::grid::uniform(0.0, 100.0, 200);
        let table = crate::TabulatedR::from_fn(&grid, fixtures::sshape_r).unwrap();
        let spec = UtilitySpec::tabulated_r(table);
        let cfg = FdConfig::from_spec(&spec, 20.0, 64, 64, 1.0, 1.0).unwrap();
        assert_eq!(*cfg.full_grid().last().unwrap(), 100.0);
        assert!(FdConfig::from_spec(&spec, 200.0, 64, 64, 1.0, 1.0).is_err());
    }
}
