//! Grid checks of the structural properties of the risk tolerance.
//!
//! Every check scans an inequality over a finite grid and keeps the largest
//! violation together with where it happened. A negative worst violation is
//! the margin by which the inequality holds. A check passes iff the worst
//! violation does not exceed its tolerance.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fd::{self, FdConfig};
use crate::fixtures::Fixture;
use crate::grid;
use crate::heat::{self, HeatSurface, Terminal};
use crate::market::MarketParams;
use crate::preferences::UtilitySpec;
use crate::surface::{Provenance, RTSurface};
use crate::transform::{self, RelativeRiskTolerance};

/// Absolute tolerance for sign checks on transform surfaces.
pub const TRANSFORM_TOLERANCE: f64 = 1e-7;

/// Default z-interval for log-concavity probes.
pub const DEFAULT_Z_RANGE: (f64, f64) = (-6.0, 6.0);

/// Terminal preference of a check: an inverse marginal (or tabulated `R`),
/// or a risk tolerance given in closed form.
#[derive(Clone)]
pub enum Preference {
    Spec(UtilitySpec),
    Tolerance(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

#[derive(Clone)]
pub struct Subject {
    pub name: String,
    pub preference: Preference,
}

impl fmt::Debug for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.preference {
            Preference::Spec(s) => s.variant_name(),
            Preference::Tolerance(_) => "R(x)",
        };
        write!(f, "Subject({}, {kind})", self.name)
    }
}

impl Subject {
    pub fn from_spec(name: impl Into<String>, spec: UtilitySpec) -> Self {
        Self {
            name: name.into(),
            preference: Preference::Spec(spec),
        }
    }

    pub fn from_tolerance<F>(name: impl Into<String>, r: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            preference: Preference::Tolerance(Arc::new(r)),
        }
    }

    pub fn fixture(f: Fixture) -> Self {
        match (f.spec(), f.terminal_r()) {
            (Some(spec), _) => Self::from_spec(f.name(), spec),
            (None, Some(r)) => Self::from_tolerance(f.name(), r),
            (None, None) => unreachable!("every fixture has a spec or a risk tolerance"),
        }
    }

    pub fn spec(&self) -> Option<&UtilitySpec> {
        match &self.preference {
            Preference::Spec(s) => Some(s),
            Preference::Tolerance(_) => None,
        }
    }

    /// The spec, if it carries an inverse marginal.
    pub fn inverse(&self) -> Option<&UtilitySpec> {
        self.spec().filter(|s| s.has_inverse_marginal())
    }

    pub fn terminal_r(&self, x: f64) -> Result<f64> {
        match &self.preference {
            Preference::Spec(s) => s.eval_r_terminal(x),
            Preference::Tolerance(r) => Ok(r(x)),
        }
    }

    pub fn heat(&self, cfg: &CheckConfig) -> Result<HeatSurface> {
        let spec = self.inverse().ok_or(Error::UnsupportedVariant {
            variant: self.spec().map_or("R(x)", |s| s.variant_name()),
            reason: "the heat transform needs an inverse marginal",
        })?;
        let market = MarketParams::with_lambda_sq(cfg.lambda_sq, cfg.horizon)?;
        match cfg.quad_order {
            Some(order) => HeatSurface::quadrature(spec.clone(), market, order),
            None => HeatSurface::new(spec.clone(), market),
        }
    }

    pub fn fd_config(&self, cfg: &CheckConfig) -> Result<FdConfig> {
        let fd = match &self.preference {
            Preference::Spec(s) => FdConfig::from_spec(s, cfg.x_max, cfg.nx, cfg.nt, cfg.lambda_sq, cfg.horizon)?,
            Preference::Tolerance(r) => {
                let r = r.clone();
                FdConfig::new(cfg.x_max, cfg.nx, cfg.nt, cfg.lambda_sq, cfg.horizon, move |x| r(x))?
            }
        };
        Ok(fd.with_buffer(cfg.buffer))
    }

    /// Which solver [`Subject::surface`] uses under `cfg`.
    pub fn provenance(&self, cfg: &CheckConfig) -> Provenance {
        match cfg.route {
            Route::Transform => Provenance::Transform,
            Route::Fd => Provenance::FiniteDifference,
            Route::Auto if self.inverse().is_some() => Provenance::Transform,
            Route::Auto => Provenance::FiniteDifference,
        }
    }

    pub fn surface(&self, cfg: &CheckConfig) -> Result<RTSurface> {
        match self.provenance(cfg) {
            Provenance::Transform => {
                let heat = self.heat(cfg)?;
                transform::build_surface(&heat, &cfg.x_grid(), &cfg.t_grid())
            }
            Provenance::FiniteDifference => fd::solve_black(&self.fd_config(cfg)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Transform when an inverse marginal exists, finite differences otherwise.
    #[default]
    Auto,
    Transform,
    Fd,
}

/// Market and grid shared by the checks of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckConfig {
    pub lambda_sq: f64,
    pub horizon: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
    pub quad_order: Option<usize>,
    pub route: Route,
    /// Overrides the default tolerance of every check.
    pub tolerance: Option<f64>,
    pub buffer: f64,
    pub z_range: (f64, f64),
    pub z_nodes: usize,
}

impl CheckConfig {
    pub fn new(lambda_sq: f64, horizon: f64, x_max: f64, nx: usize, nt: usize) -> Self {
        Self {
            lambda_sq,
            horizon,
            x_max,
            nx,
            nt,
            quad_order: None,
            route: Route::Auto,
            tolerance: None,
            buffer: fd::DEFAULT_BUFFER,
            z_range: DEFAULT_Z_RANGE,
            z_nodes: 241,
        }
    }

    pub fn with_lambda_sq(&self, lambda_sq: f64) -> Self {
        Self {
            lambda_sq,
            ..self.clone()
        }
    }

    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    pub fn x_grid(&self) -> Vec<f64> {
        grid::uniform(0.0, self.x_max, self.nx)
    }

    pub fn t_grid(&self) -> Vec<f64> {
        grid::uniform(0.0, self.horizon, self.nt)
    }

    pub fn z_grid(&self) -> Vec<f64> {
        grid::uniform(self.z_range.0, self.z_range.1, self.z_nodes.max(3) - 1)
    }

    /// The override, or the default for surfaces of the given origin.
    pub fn tolerance_for(&self, provenance: Provenance) -> f64 {
        self.tolerance.unwrap_or(match provenance {
            Provenance::Transform => TRANSFORM_TOLERANCE,
            Provenance::FiniteDifference => {
                let dx = self.x_max / self.nx as f64;
                10.0 * (dx * dx + self.horizon / self.nt as f64)
            }
        })
    }
}

/// Default tolerance for a surface: `1e-7` for transform surfaces and
/// `10 (dx^2 + dt)` (largest spacings) for finite-difference ones.
pub fn default_tolerance(s: &RTSurface) -> f64 {
    match s.provenance() {
        Provenance::Transform => TRANSFORM_TOLERANCE,
        Provenance::FiniteDifference => {
            let dx = max_spacing(s.x());
            10.0 * (dx * dx + max_spacing(s.t()))
        }
    }
}

fn max_spacing(v: &[f64]) -> f64 {
    v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
    PreconditionFailed,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "skipped",
            Verdict::PreconditionFailed => "precondition",
        }
    }
}

/// A grid location; `coord` is wealth, or `z` for checks on `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub coord: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub axis: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub t_nodes: usize,
    pub source: &'static str,
}

impl GridSpec {
    fn of(s: &RTSurface) -> Self {
        Self::new("x", s.x(), s.t(), s.provenance().label())
    }

    fn new(axis: &'static str, x: &[f64], t: &[f64], source: &'static str) -> Self {
        Self {
            axis,
            lo: x[0],
            hi: *x.last().unwrap(),
            nodes: x.len(),
            t_lo: t[0],
            t_hi: *t.last().unwrap(),
            t_nodes: t.len(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    /// Canonical check id, e.g. `curvature:expect=convex`.
    pub check: String,
    /// The inequality being checked.
    pub property: &'static str,
    pub fixture: String,
    pub grid: GridSpec,
    pub verdict: Verdict,
    pub worst_violation: f64,
    pub location: Option<Point>,
    pub tolerance: f64,
    pub note: Option<String>,
    pub metrics: BTreeMap<String, f64>,
}

impl CheckRecord {
    fn new(check: String, property: &'static str, fixture: &str, grid: GridSpec, tolerance: f64) -> Self {
        Self {
            check,
            property,
            fixture: fixture.to_string(),
            grid,
            verdict: Verdict::Skipped,
            worst_violation: f64::NAN,
            location: None,
            tolerance,
            note: None,
            metrics: BTreeMap::new(),
        }
    }

    fn judge(mut self, worst: Worst) -> Self {
        self.worst_violation = worst.value;
        self.location = worst.at;
        self.verdict = match worst.at {
            None => {
                self.note.get_or_insert_with(|| "no grid points to check".into());
                Verdict::Skipped
            }
            Some(_) if worst.value <= self.tolerance => Verdict::Pass,
            Some(_) => Verdict::Fail,
        };
        self
    }

    fn halt(mut self, verdict: Verdict, note: impl Into<String>) -> Self {
        self.verdict = verdict;
        self.note = Some(note.into());
        self
    }

    fn metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Running maximum of a violation. NaN counts as an infinite violation.
#[derive(Debug, Clone, Copy)]
struct Worst {
    value: f64,
    at: Option<Point>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            at: None,
        }
    }

    fn push(&mut self, v: f64, coord: f64, t: f64) {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if self.at.is_none() || v > self.value {
            self.value = v;
            self.at = Some(Point { coord, t });
        }
    }

    fn merge(self, other: Worst) -> Worst {
        match (self.at, other.at) {
            (None, _) => other,
            (_, None) => self,
            _ if other.value > self.value => other,
            _ => self,
        }
    }
}

/// Scans `f(i, j)` over every node with `x > 0`.
fn scan(s: &RTSurface, f: impl Fn(usize, usize) -> f64) -> Worst {
    let mut w = Worst::new();
    for (i, &t) in s.t().iter().enumerate() {
        for j in s.first_positive()..s.x().len() {
            w.push(f(i, j), s.x()[j], t);
        }
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Concave,
    Convex,
}

impl Shape {
    fn sign(self) -> f64 {
        match self {
            Shape::Concave => -1.0,
            Shape::Convex => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Concave => "concave",
            Shape::Convex => "convex",
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concave" => Ok(Shape::Concave),
            "convex" => Ok(Shape::Convex),
            _ => Err(Error::InvalidArgument(format!("expected concave or convex, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Increasing => "increasing",
            Direction::Decreasing => "decreasing",
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increasing" => Ok(Direction::Increasing),
            "decreasing" => Ok(Direction::Decreasing),
            _ => Err(Error::InvalidArgument(format!(
                "expected increasing or decreasing, got '{s}'"
            ))),
        }
    }
}

/// `r1 <= r2` for matched finite-difference solves. Terminal data with
/// `R1 > R2` somewhere are a usage error.
pub fn check_comparison(lower: &Subject, upper: &Subject, cfg: &CheckConfig) -> Result<CheckRecord> {
    let c1 = lower.fd_config(cfg)?;
    let c2 = upper.fd_config(cfg)?;
    let (r1, r2) = (c1.terminal_samples()?, c2.terminal_samples()?);
    if let Some(k) = r1.iter().zip(&r2).position(|(a, b)| a > b) {
        return Err(Error::Precondition(format!(
            "terminal {} exceeds terminal {} at x = {}",
            lower.name,
            upper.name,
            c1.full_grid()[k]
        )));
    }
    let (s1, s2) = rayon::join(|| fd::solve_black(&c1), || fd::solve_black(&c2));
    let (s1, s2) = (s1?, s2?);
    let tol = cfg.tolerance.unwrap_or_else(|| c1.tolerance());
    let id = format!("comparison:against={}", upper.name);
    let record = CheckRecord::new(
        id,
        "r1 <= r2",
        &format!("{} vs {}", lower.name, upper.name),
        GridSpec::of(&s1),
        tol,
    );
    Ok(record.judge(scan(&s1, |i, j| s1.r()[[i, j]] - s2.r()[[i, j]])))
}

/// `r_x > 0`.
pub fn check_monotonicity(s: &RTSurface, fixture: &str, tol: f64) -> CheckRecord {
    CheckRecord::new("monotonicity".into(), "r_x > 0", fixture, GridSpec::of(s), tol)
        .judge(scan(s, |i, j| -s.r_x()[[i, j]]))
}

/// Concave: `r_xx <= 0` and `r` increasing in time; convex: `r_xx >= 0` and
/// `r` decreasing in time. Time monotonicity is read off consecutive rows,
/// `(r(x, t_{k+1}) - r(x, t_k)) / dt`, located at the earlier time.
pub fn check_curvature(s: &RTSurface, expect: Shape, fixture: &str, tol: f64) -> CheckRecord {
    let sign = expect.sign();
    let space = scan(s, |i, j| -sign * s.r_xx()[[i, j]]);
    let mut time = Worst::new();
    for k in 0..s.t().len() - 1 {
        let dt = s.t()[k + 1] - s.t()[k];
        for j in s.first_positive()..s.x().len() {
            let rt = (s.r()[[k + 1, j]] - s.r()[[k, j]]) / dt;
            time.push(sign * rt, s.x()[j], s.t()[k]);
        }
    }
    let property = match expect {
        Shape::Concave => "r_xx <= 0 and r_t >= 0",
        Shape::Convex => "r_xx >= 0 and r_t <= 0",
    };
    CheckRecord::new(
        format!("curvature:expect={}", expect.name()),
        property,
        fixture,
        GridSpec::of(s),
        tol,
    )
    .metric("worst_space", space.value)
    .metric("worst_time", time.value)
    .judge(space.merge(time))
}

/// Shape of the terminal row: concave, convex, both (linear) or neither.
fn terminal_shape(s: &RTSurface, tol: f64) -> (bool, bool) {
    let last = s.t().len() - 1;
    let row = (s.first_positive()..s.x().len()).map(|j| s.r_xx()[[last, j]]);
    let (lo, hi) = row.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (hi <= tol, lo >= -tol)
}

/// Concave `R`: `r` decreasing in `|lambda|^2`; convex `R`: increasing.
pub fn check_lambda_monotonicity(subject: &Subject, low: f64, high: f64, cfg: &CheckConfig) -> Result<CheckRecord> {
    if !(low < high) {
        return Err(Error::InvalidArgument(format!("need low < high, got {low} and {high}")));
    }
    let (s_low, s_high) = rayon::join(
        || subject.surface(&cfg.with_lambda_sq(low)),
        || subject.surface(&cfg.with_lambda_sq(high)),
    );
    let (s_low, s_high) = (s_low?, s_high?);
    let tol = cfg.tolerance.unwrap_or_else(|| default_tolerance(&s_low));
    let id = format!("lambda_monotonicity:low={low},high={high}");
    let record = CheckRecord::new(id, "r monotone in |lambda|^2", &subject.name, GridSpec::of(&s_low), tol)
        .metric("low", low)
        .metric("high", high);
    let diff = |i: usize, j: usize| s_high.r()[[i, j]] - s_low.r()[[i, j]];
    Ok(match terminal_shape(&s_low, tol) {
        (true, true) => record.judge(scan(&s_low, |i, j| diff(i, j).abs())),
        (true, false) => record.judge(scan(&s_low, diff)),
        (false, true) => record.judge(scan(&s_low, |i, j| -diff(i, j))),
        (false, false) => record.halt(
            Verdict::PreconditionFailed,
            "terminal risk tolerance is neither concave nor convex",
        ),
    })
}

/// Sign changes of `r_xx(., t)` on each time row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InflectionCurve {
    pub t: Vec<f64>,
    /// Interpolated zero crossings of `r_xx` per row.
    pub crossings: Vec<Vec<f64>>,
    /// Values below this magnitude are treated as zero (rounding level of the
    /// stored second derivative).
    pub noise_floor: Vec<f64>,
}

impl InflectionCurve {
    pub fn counts(&self) -> Vec<usize> {
        self.crossings.iter().map(Vec::len).collect()
    }

    /// `X(t)` if every row has exactly one crossing.
    pub fn curve(&self) -> Option<Vec<f64>> {
        self.crossings
            .iter()
            .map(|c| if c.len() == 1 { Some(c[0]) } else { None })
            .collect()
    }

    /// Largest `|X(t_{k+1}) - X(t_k)|`.
    pub fn max_jump(&self) -> Option<f64> {
        self.curve()
            .map(|x| x.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max))
    }
}

fn noise_floor(s: &RTSurface, i: usize) -> f64 {
    let x = s.x();
    let h = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let r_max = s.r().row(i).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    64.0 * f64::EPSILON * r_max / (h * h)
}

fn sign_changes(x: &[f64], v: &[f64], floor: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for (&x, &v) in x.iter().zip(v) {
        if !(v.abs() > floor) {
            continue;
        }
        if let Some((xa, va)) = last {
            if va.signum() != v.signum() {
                out.push(xa - va * (x - xa) / (v - va));
            }
        }
        last = Some((x, v));
    }
    out
}

pub fn track_inflection_curve(s: &RTSurface) -> InflectionCurve {
    let j0 = s.first_positive();
    let x = &s.x()[j0..];
    let mut crossings = Vec::with_capacity(s.t().len());
    let mut floors = Vec::with_capacity(s.t().len());
    for i in 0..s.t().len() {
        let row: Vec<f64> = s.r_xx().row(i).iter().skip(j0).copied().collect();
        let floor = noise_floor(s, i);
        crossings.push(sign_changes(x, &row, floor));
        floors.push(floor);
    }
    InflectionCurve {
        t: s.t().to_vec(),
        crossings,
        noise_floor: floors,
    }
}

/// `G = r r_xx / r_x`, the sign carrier of `r_xx` read in wealth.
fn g_of(s: &RTSurface, i: usize, j: usize) -> f64 {
    s.r()[[i, j]] * s.r_xx()[[i, j]] / s.r_x()[[i, j]]
}

/// Exactly one sign change of `r_xx` per time row, for terminal data with a
/// single inflection. The sign conditions on `G` at the grid ends (every `t`)
/// and the non-degeneracy `G_z != 0` at the terminal inflection are verified on
/// the computed surface and reported as failed preconditions if they do not
/// hold.
pub fn check_inflection(s: &RTSurface, fixture: &str) -> CheckRecord {
    let curve = track_inflection_curve(s);
    let counts = curve.counts();
    let record = CheckRecord::new(
        "inflection".into(),
        "exactly one sign change of r_xx per t",
        fixture,
        GridSpec::of(s),
        0.0,
    )
    .metric("min_count", *counts.iter().min().unwrap() as f64)
    .metric("max_count", *counts.iter().max().unwrap() as f64);
    let last = s.t().len() - 1;
    if counts[last] != 1 {
        return record.halt(
            Verdict::PreconditionFailed,
            format!("terminal risk tolerance has {} inflection points, not 1", counts[last]),
        );
    }
    let (j0, jn) = (s.first_positive(), s.x().len() - 1);
    let left_sign = g_of(s, last, j0).signum();
    for (i, &t) in s.t().iter().enumerate() {
        let (gl, gr) = (g_of(s, i, j0), g_of(s, i, jn));
        if !(gl.signum() == left_sign && gr.signum() == -left_sign) {
            return record.halt(
                Verdict::PreconditionFailed,
                format!("G does not change sign between the grid ends at t = {t} (G = {gl:e}, {gr:e})"),
            );
        }
    }
    let x_hat = curve.crossings[last][0];
    let x = s.x();
    let k = x.partition_point(|&v| v <= x_hat).clamp(j0 + 1, jn) - 1;
    let theta = (x_hat - x[k]) / (x[k + 1] - x[k]);
    let r_hat = s.r()[[last, k]] * (1.0 - theta) + s.r()[[last, k + 1]] * theta;
    let g_z = r_hat * (g_of(s, last, k + 1) - g_of(s, last, k)) / (x[k + 1] - x[k]);
    let record = record.metric("x_hat", x_hat).metric("g_z_at_inflection", g_z);
    if !(g_z.abs() > 0.0) || !g_z.is_finite() {
        return record.halt(Verdict::PreconditionFailed, "G_z vanishes at the terminal inflection");
    }
    let mut worst = Worst::new();
    for (i, &t) in s.t().iter().enumerate() {
        let at = curve.crossings[i].first().copied().unwrap_or(f64::NAN);
        worst.push((counts[i] as f64 - 1.0).abs(), at, t);
    }
    let record = match curve.max_jump() {
        Some(j) => record.metric("max_jump", j),
        None => record,
    };
    record.judge(worst)
}

/// The number of sign changes of `r_xx(., t)` does not decrease as `t`
/// increases.
pub fn check_zero_set(s: &RTSurface, fixture: &str) -> CheckRecord {
    let curve = track_inflection_curve(s);
    let counts = curve.counts();
    let mut worst = Worst::new();
    for k in 0..counts.len() - 1 {
        worst.push(counts[k] as f64 - counts[k + 1] as f64, f64::NAN, s.t()[k]);
    }
    CheckRecord::new(
        "zero_set".into(),
        "sign-change count of r_xx non-decreasing in t",
        fixture,
        GridSpec::of(s),
        0.0,
    )
    .metric("count_at_start", counts[0] as f64)
    .metric("count_at_horizon", *counts.last().unwrap() as f64)
    .judge(worst)
}

/// `(r / x)_x` and `(r / x)_xx` on the nodes of `s` with `x > 0`. With a heat
/// surface they come from the transform identities; otherwise from `r`, `r_x`
/// and `r_xx`.
pub fn relative_derivatives(s: &RTSurface, heat: Option<&HeatSurface>) -> Result<(Array2<f64>, Array2<f64>)> {
    let j0 = s.first_positive();
    let x = s.x();
    let rows: Vec<Vec<(f64, f64)>> = match heat {
        Some(heat) => s
            .t()
            .par_iter()
            .map(|&t| {
                let mut seed = 0.0;
                x.iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        if j < j0 {
                            return Ok((f64::NAN, f64::NAN));
                        }
                        let z = transform::invert_h_from(heat, x, t, seed)?;
                        seed = z;
                        let v = RelativeRiskTolerance::from_derivs(&heat.derivs(z, t)?);
                        Ok((v.x_derivative, v.xx_derivative))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?,
        None => (0..s.t().len())
            .map(|i| {
                x.iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        if j < j0 {
                            return (f64::NAN, f64::NAN);
                        }
                        let (r, rx, rxx) = (s.r()[[i, j]], s.r_x()[[i, j]], s.r_xx()[[i, j]]);
                        (
                            (x * rx - r) / (x * x),
                            (x * x * rxx - 2.0 * x * rx + 2.0 * r) / (x * x * x),
                        )
                    })
                    .collect()
            })
            .collect(),
    };
    let shape = s.r().dim();
    Ok((
        Array2::from_shape_fn(shape, |(i, j)| rows[i][j].0),
        Array2::from_shape_fn(shape, |(i, j)| rows[i][j].1),
    ))
}

/// Uniform sign of `(r / x)_x`.
pub fn check_relative_monotonicity(
    s: &RTSurface,
    rel_x: &Array2<f64>,
    expect: Direction,
    fixture: &str,
    tol: f64,
) -> CheckRecord {
    let sign = expect.sign();
    let property = match expect {
        Direction::Increasing => "(r/x)_x >= 0",
        Direction::Decreasing => "(r/x)_x <= 0",
    };
    CheckRecord::new(
        format!("relative_monotonicity:expect={}", expect.name()),
        property,
        fixture,
        GridSpec::of(s),
        tol,
    )
    .judge(scan(s, |i, j| -sign * rel_x[[i, j]]))
}

/// Sign pattern of `((log H)_zz, (log H)_zzz)` at the horizon on a z-grid:
/// `(-, +)` predicts convex `r / x`, `(+, -)` concave.
pub fn relative_curvature_hypothesis(
    heat: &HeatSurface,
    z_grid: &[f64],
    tol: f64,
) -> Result<(Option<Shape>, f64, f64)> {
    let t = heat.horizon();
    let vals = z_grid
        .iter()
        .map(|&z| heat.derivs(z, t).map(|d| (d.w1, d.log_h_zzz())))
        .collect::<Result<Vec<_>>>()?;
    let (lo2, hi2) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v.0), hi.max(v.0))
    });
    let (lo3, hi3) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v.1), hi.max(v.1))
    });
    let shape = if hi2 < -tol && lo3 > tol {
        Some(Shape::Convex)
    } else if lo2 > tol && hi3 < -tol {
        Some(Shape::Concave)
    } else {
        None
    };
    // Margins of the case that was (or came closest to being) met.
    let (m2, m3) = match shape {
        Some(Shape::Concave) => (lo2, -hi3),
        _ => (-hi2, lo3),
    };
    Ok((shape, m2, m3))
}

/// `r / x` convex (concave) in wealth when `(log H(., T))_zz < 0` and
/// `(log H(., T))_zzz > 0` (resp. reversed); skipped when neither holds.
pub fn check_relative_curvature(subject: &Subject, cfg: &CheckConfig) -> Result<CheckRecord> {
    let provenance = subject.provenance(cfg);
    let tol = cfg.tolerance_for(provenance);
    let x = cfg.x_grid();
    let t = cfg.t_grid();
    let record = CheckRecord::new(
        "relative_curvature".into(),
        "(r/x)_xx uniformly signed",
        &subject.name,
        GridSpec::new("x", &x, &t, provenance.label()),
        tol,
    );
    let Some(_) = subject.inverse() else {
        return Ok(record.halt(Verdict::Skipped, "hypothesis concerns H; no inverse marginal"));
    };
    let heat = subject.heat(cfg)?;
    let (z_lo, z_hi) = heat.z_domain(x[1], cfg.x_max)?;
    let z = grid::uniform(z_lo, z_hi, cfg.z_nodes.max(3) - 1);
    let (shape, m2, m3) = relative_curvature_hypothesis(&heat, &z, TRANSFORM_TOLERANCE)?;
    let record = record
        .metric("hypothesis_margin_2", m2)
        .metric("hypothesis_margin_3", m3);
    let Some(shape) = shape else {
        return Ok(record.halt(
            Verdict::Skipped,
            "sign hypothesis on log H at the horizon does not hold",
        ));
    };
    let s = subject.surface(cfg)?;
    let use_heat = (provenance == Provenance::Transform).then_some(&heat);
    let (_, rel_xx) = relative_derivatives(&s, use_heat)?;
    let mut record = record.judge(scan(&s, |i, j| -shape.sign() * rel_xx[[i, j]]));
    record.note = Some(format!("predicted {}", shape.name()));
    Ok(record)
}

/// `a x <= r <= b x` with `a`, `b` the extreme exponents, plus empirical
/// constants of `|x^(n-1) d^n r| <= K_n` and `|x^n d^n (r/x)| <= L_n`, `n <= 3`.
pub fn check_cm_bounds(s: &RTSurface, spec: &UtilitySpec, fixture: &str, tol: f64) -> CheckRecord {
    let record = CheckRecord::new("cm_bounds".into(), "a x <= r <= b x", fixture, GridSpec::of(s), tol);
    let Some((a, b)) = spec.exponent_range() else {
        return record.halt(
            Verdict::PreconditionFailed,
            "not an atomic completely monotonic measure",
        );
    };
    let x = s.x();
    let j0 = s.first_positive();
    let mut k = [0.0_f64; 3];
    let mut l = [0.0_f64; 3];
    let (mut lower, mut upper) = (f64::INFINITY, f64::INFINITY);
    let (mut lower_rel, mut upper_rel) = (f64::INFINITY, f64::INFINITY);
    for i in 0..s.t().len() {
        let rxx_row: Vec<f64> = s.r_xx().row(i).to_vec();
        for j in j0..x.len() {
            let xv = x[j];
            let (r, rx, rxx) = (s.r()[[i, j]], s.r_x()[[i, j]], s.r_xx()[[i, j]]);
            let rxxx = grid::d1(x, &rxx_row, j);
            lower = lower.min(r - a * xv);
            upper = upper.min(b * xv - r);
            lower_rel = lower_rel.min(r / xv - a);
            upper_rel = upper_rel.min(b - r / xv);
            k[0] = k[0].max(rx.abs());
            k[1] = k[1].max((xv * rxx).abs());
            k[2] = k[2].max((xv * xv * rxxx).abs());
            l[0] = l[0].max((rx - r / xv).abs());
            l[1] = l[1].max((xv * rxx - 2.0 * rx + 2.0 * r / xv).abs());
            l[2] = l[2].max((xv * xv * rxxx - 3.0 * xv * rxx + 6.0 * rx - 6.0 * r / xv).abs());
        }
    }
    record
        .metric("a", a)
        .metric("b", b)
        .metric("lower_margin", lower)
        .metric("upper_margin", upper)
        .metric("lower_margin_relative", lower_rel)
        .metric("upper_margin_relative", upper_rel)
        .metric("k1", k[0])
        .metric("k2", k[1])
        .metric("k3", k[2])
        .metric("l1", l[0])
        .metric("l2", l[1])
        .metric("l3", l[2])
        .judge(scan(s, |i, j| {
            let (xv, r) = (x[j], s.r()[[i, j]]);
            (a * xv - r).max(r - b * xv)
        }))
}

/// Sign of `(log h)_zz` for the heat evolution of a positive datum, by second
/// differences of `log h` on `z_grid`. A datum without the asserted terminal
/// sign is reported as a failed precondition.
#[allow(clippy::too_many_arguments)]
pub fn check_logconcavity(
    datum: impl Into<Terminal>,
    name: &str,
    mode: Shape,
    market: MarketParams,
    z_grid: &[f64],
    t_grid: &[f64],
    order: usize,
    tol: f64,
) -> Result<CheckRecord> {
    grid::check_increasing("z", z_grid)?;
    let heat = HeatSurface::quadrature(datum, market, order)?;
    let sign = mode.sign();
    let row = |t: f64| -> Result<Worst> {
        let lh = z_grid
            .iter()
            .map(|&z| heat.log_h(z, t).map(|v| v.0))
            .collect::<Result<Vec<_>>>()?;
        let mut w = Worst::new();
        for (j, &z) in z_grid.iter().enumerate() {
            w.push(-sign * grid::d2(z_grid, &lh, j), z, t);
        }
        Ok(w)
    };
    let property = match mode {
        Shape::Concave => "(log h)_zz <= 0",
        Shape::Convex => "(log h)_zz >= 0",
    };
    let record = CheckRecord::new(
        format!("logconcavity:mode={}", mode.name()),
        property,
        name,
        GridSpec::new("z", z_grid, t_grid, "quadrature"),
        tol,
    );
    let terminal = row(heat.horizon())?;
    if terminal.value > tol {
        return Ok(record.halt(
            Verdict::PreconditionFailed,
            format!("terminal datum is not log-{} (worst {:e})", mode.name(), terminal.value),
        ));
    }
    let worst = t_grid
        .par_iter()
        .map(|&t| row(t))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(Worst::new(), Worst::merge);
    Ok(record.judge(worst))
}

/// Empirical constants of the spatial and temporal estimates; passes iff all
/// are finite and `r / x`, `r_x` stay positive.
pub fn check_estimates(s: &RTSurface, fixture: &str) -> CheckRecord {
    let e = s.estimates();
    let values = [
        e.ratio.min,
        e.ratio.max,
        e.slope.min,
        e.slope.max,
        e.x_r_xx,
        e.r_r_xx,
        e.square_xx,
        e.relative_1.min,
        e.relative_1.max,
        e.relative_2.min,
        e.relative_2.max,
    ];
    let mut worst = Worst::new();
    let t_end = *s.t().last().unwrap();
    if values.iter().any(|v| !v.is_finite()) {
        worst.push(f64::INFINITY, f64::NAN, t_end);
    } else {
        worst.push(-e.ratio.min.min(e.slope.min), f64::NAN, t_end);
    }
    CheckRecord::new(
        "estimates".into(),
        "finite bounds with k0 > 0, k1 > 0",
        fixture,
        GridSpec::of(s),
        0.0,
    )
    .metric("k0", e.ratio.min)
    .metric("K0", e.ratio.max)
    .metric("k1", e.slope.min)
    .metric("K1", e.slope.max)
    .metric("K2", e.x_r_xx)
    .metric("r_r_xx", e.r_r_xx)
    .metric("square_xx", e.square_xx)
    .metric("L1", e.relative_1.min.abs().max(e.relative_1.max.abs()))
    .metric("L2", e.relative_2.min.abs().max(e.relative_2.max.abs()))
    .metric("m", e.time.min)
    .metric("M", e.time.max)
    .judge(worst)
}

/// Datum evolved by the log-concavity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datum {
    /// `H(., T)` of the subject.
    Subject,
    /// `exp(-z^2)`.
    Gaussian,
}

/// A selectable check, written `name` or `name:key=value,key=value`.
#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    Comparison { against: Fixture },
    Monotonicity,
    Curvature { expect: Shape },
    LambdaMonotonicity { low: f64, high: f64 },
    Inflection,
    ZeroSet,
    RelativeMonotonicity { expect: Direction },
    RelativeCurvature,
    CmBounds,
    LogConcavity { mode: Shape, datum: Datum },
    Estimates,
}

impl Check {
    pub const NAMES: [&'static str; 11] = [
        "comparison",
        "monotonicity",
        "curvature",
        "lambda_monotonicity",
        "inflection",
        "zero_set",
        "relative_monotonicity",
        "relative_curvature",
        "cm_bounds",
        "logconcavity",
        "estimates",
    ];

    fn needs_surface(&self) -> bool {
        !matches!(
            self,
            Check::Comparison { .. }
                | Check::LambdaMonotonicity { .. }
                | Check::RelativeCurvature
                | Check::LogConcavity { .. }
        )
    }

    pub fn run(&self, subject: &Subject, cfg: &CheckConfig, base: Option<&RTSurface>) -> Result<CheckRecord> {
        let owned;
        let base = match (self.needs_surface(), base) {
            (false, _) => None,
            (true, Some(s)) => Some(s),
            (true, None) => {
                owned = subject.surface(cfg)?;
                Some(&owned)
            }
        };
        let tol = base.map(|s| cfg.tolerance.unwrap_or_else(|| default_tolerance(s)));
        let name = subject.name.as_str();
        match self {
            Check::Comparison { against } => check_comparison(subject, &Subject::fixture(*against), cfg),
            Check::Monotonicity => Ok(check_monotonicity(base.unwrap(), name, tol.unwrap())),
            Check::Curvature { expect } => Ok(check_curvature(base.unwrap(), *expect, name, tol.unwrap())),
            Check::LambdaMonotonicity { low, high } => check_lambda_monotonicity(subject, *low, *high, cfg),
            Check::Inflection => Ok(check_inflection(base.unwrap(), name)),
            Check::ZeroSet => Ok(check_zero_set(base.unwrap(), name)),
            Check::RelativeMonotonicity { expect } => {
                let s = base.unwrap();
                let heat = match s.provenance() {
                    Provenance::Transform => Some(subject.heat(cfg)?),
                    Provenance::FiniteDifference => None,
                };
                let (rel_x, _) = relative_derivatives(s, heat.as_ref())?;
                Ok(check_relative_monotonicity(s, &rel_x, *expect, name, tol.unwrap()))
            }
            Check::RelativeCurvature => check_relative_curvature(subject, cfg),
            Check::CmBounds => {
                let s = base.unwrap();
                Ok(match subject.spec() {
                    Some(spec) => check_cm_bounds(s, spec, name, tol.unwrap()),
                    None => CheckRecord::new(
                        "cm_bounds".into(),
                        "a x <= r <= b x",
                        name,
                        GridSpec::of(s),
                        tol.unwrap(),
                    )
                    .halt(
                        Verdict::PreconditionFailed,
                        "not an atomic completely monotonic measure",
                    ),
                })
            }
            Check::LogConcavity { mode, datum } => {
                let market = MarketParams::with_lambda_sq(cfg.lambda_sq, cfg.horizon)?;
                let t: Vec<f64> = (0..=4).map(|k| 0.25 * k as f64 * cfg.horizon).collect();
                let order = cfg.quad_order.unwrap_or(heat::DEFAULT_QUADRATURE_ORDER);
                let tol = cfg.tolerance.unwrap_or(TRANSFORM_TOLERANCE);
                let z = cfg.z_grid();
                let mut record = match datum {
                    Datum::Gaussian => {
                        check_logconcavity(heat::gaussian_terminal(), "gaussian", *mode, market, &z, &t, order, tol)?
                    }
                    Datum::Subject => {
                        let spec = subject.inverse().ok_or(Error::UnsupportedVariant {
                            variant: subject.spec().map_or("R(x)", |s| s.variant_name()),
                            reason: "the heat datum needs an inverse marginal",
                        })?;
                        check_logconcavity(spec.clone(), name, *mode, market, &z, &t, order, tol)?
                    }
                };
                record.check = self.to_string();
                Ok(record)
            }
            Check::Estimates => Ok(check_estimates(base.unwrap(), name)),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Check::Comparison { against } => write!(f, "comparison:against={}", against.name()),
            Check::Monotonicity => f.write_str("monotonicity"),
            Check::Curvature { expect } => write!(f, "curvature:expect={}", expect.name()),
            Check::LambdaMonotonicity { low, high } => write!(f, "lambda_monotonicity:low={low},high={high}"),
            Check::Inflection => f.write_str("inflection"),
            Check::ZeroSet => f.write_str("zero_set"),
            Check::RelativeMonotonicity { expect } => write!(f, "relative_monotonicity:expect={}", expect.name()),
            Check::RelativeCurvature => f.write_str("relative_curvature"),
            Check::CmBounds => f.write_str("cm_bounds"),
            Check::LogConcavity { mode, datum } => {
                write!(f, "logconcavity:mode={}", mode.name())?;
                if *datum == Datum::Gaussian {
                    f.write_str(",datum=gaussian")?;
                }
                Ok(())
            }
            Check::Estimates => f.write_str("estimates"),
        }
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let mut map = BTreeMap::new();
        for kv in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("check parameter '{kv}' is not key=value")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |key: &str| map.remove(key);
        let required = |v: Option<String>, key: &str| {
            v.ok_or_else(|| Error::InvalidArgument(format!("check '{name}' needs {key}=...")))
        };
        let number = |v: String| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("'{v}' is not a number")))
        };
        let check = match name.trim() {
            "comparison" => Check::Comparison {
                against: required(take("against"), "against")?.parse()?,
            },
            "monotonicity" => Check::Monotonicity,
            "curvature" => Check::Curvature {
                expect: required(take("expect"), "expect")?.parse()?,
            },
            "lambda_monotonicity" => Check::LambdaMonotonicity {
                low: take("low").map(number).transpose()?.unwrap_or(0.04),
                high: take("high").map(number).transpose()?.unwrap_or(0.09),
            },
            "inflection" => Check::Inflection,
            "zero_set" => Check::ZeroSet,
            "relative_monotonicity" => Check::RelativeMonotonicity {
                expect: required(take("expect"), "expect")?.parse()?,
            },
            "relative_curvature" => Check::RelativeCurvature,
            "cm_bounds" => Check::CmBounds,
            "logconcavity" => Check::LogConcavity {
                mode: required(take("mode"), "mode")?.parse()?,
                datum: match take("datum").as_deref() {
                    None | Some("subject") => Datum::Subject,
                    Some("gaussian") => Datum::Gaussian,
                    Some(other) => return Err(Error::InvalidArgument(format!("unknown datum '{other}'"))),
                },
            },
            "estimates" => Check::Estimates,
            other => return Err(Error::InvalidArgument(format!("unknown check id '{other}'"))),
        };
        if let Some(key) = map.keys().next() {
            return Err(Error::InvalidArgument(format!(
                "check '{name}' has no parameter '{key}'"
            )));
        }
        Ok(check)
    }
}

/// Records of one run of the suite; serializes as a list.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PropertyReport {
    pub records: Vec<CheckRecord>,
}

impl PropertyReport {
    pub fn any_failed(&self) -> bool {
        self.records.iter().any(|r| r.verdict == Verdict::Fail)
    }

    /// Fixed-width summary table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<44} {:<14} {:<12} {:>12} {:>10} {:>10} {:>10}\n",
            "check", "fixture", "verdict", "worst", "at", "t", "tol"
        );
        for r in &self.records {
            let (at, t) = r.location.map_or((f64::NAN, f64::NAN), |p| (p.coord, p.t));
            out.push_str(&format!(
                "{:<44} {:<14} {:<12} {:>12.4e} {:>10.4} {:>10.4} {:>10.2e}\n",
                r.check,
                r.fixture,
                r.verdict.label(),
                r.worst_violation,
                at,
                t,
                r.tolerance
            ));
            if let Some(note) = &r.note {
                out.push_str(&format!("    {note}\n"));
            }
        }
        out
    }
}

/// Runs `checks` concurrently on one subject. The base surface is built once.
pub fn run_checks(subject: &Subject, checks: &[Check], cfg: &CheckConfig) -> Result<PropertyReport> {
    if checks.is_empty() {
        return Err(Error::InvalidArgument("no checks selected".into()));
    }
    let base = if checks.iter().any(Check::needs_surface) {
        Some(subject.surface(cfg)?)
    } else {
        None
    };
    let records = checks
        .par_iter()
        .map(|c| c.run(subject, cfg, base.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(PropertyReport { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn transform_cfg() -> CheckConfig {
        CheckConfig::new(1.0, 1.0, 20.0, 80, 20)
    }

    fn fd_cfg() -> CheckConfig {
        CheckConfig::new(1.0, 1.0, 10.0, 100, 100)
    }

    #[test]
    fn check_ids_round_trip() {
        for id in [
            "comparison:against=dominating",
            "monotonicity",
            "curvature:expect=concave",
            "lambda_monotonicity:low=0.04,high=0.09",
            "inflection",
            "zero_set",
            "relative_monotonicity:expect=increasing",
            "relative_curvature",
            "cm_bounds",
            "logconcavity:mode=convex",
            "logconcavity:mode=concave,datum=gaussian",
            "estimates",
        ] {
            let c: Check = id.parse().unwrap();
            assert_eq!(c.to_string(), id);
        }
        assert!("bogus".parse::<Check>().is_err());
        assert!("curvature".parse::<Check>().is_err());
        assert!("curvature:expect=wavy".parse::<Check>().is_err());
        assert!("monotonicity:x=1".parse::<Check>().is_err());
    }

    #[test]
    fn empty_selection_is_an_error() {
        let err = run_checks(&Subject::fixture(Fixture::Mix23), &[], &transform_cfg()).unwrap_err();
        assert!(err.to_string().contains("no checks selected"));
    }

    #[test]
    fn mix23_suite() {
        let checks: Vec<Check> = [
            "monotonicity",
            "curvature:expect=convex",
            "curvature:expect=concave",
            "cm_bounds",
            "relative_monotonicity:expect=increasing",
            "inflection",
            "zero_set",
            "estimates",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
        let report = run_checks(&Subject::fixture(Fixture::Mix23), &checks, &transform_cfg()).unwrap();
        let verdicts: Vec<Verdict> = report.records.iter().map(|r| r.verdict).collect();
        assert_eq!(
            verdicts,
            [
                Verdict::Pass,
                Verdict::Pass,
                Verdict::Fail,
                Verdict::Pass,
                Verdict::Pass,
                Verdict::PreconditionFailed,
                Verdict::Pass,
                Verdict::Pass
            ],
            "{}",
            report.table()
        );
        assert!(report.any_failed());
        let cm = &report.records[3];
        assert_eq!(cm.metrics["a"], 2.0);
        assert!(cm.metrics["lower_margin"] >= 0.0);
        assert!(cm.location.is_some());
    }

    #[test]
    fn linear_cases_pass_both_readings() {
        let s = Subject::fixture(Fixture::Power2).surface(&transform_cfg()).unwrap();
        for shape in [Shape::Concave, Shape::Convex] {
            assert!(check_curvature(&s, shape, "power2", 1e-7).passed());
        }
        let (rel_x, _) = relative_derivatives(&s, None).unwrap();
        for d in [Direction::Increasing, Direction::Decreasing] {
            assert!(check_relative_monotonicity(&s, &rel_x, d, "power2", 1e-7).passed());
        }
        let r = check_cm_bounds(&s, &fixtures::power2(), "power2", 1e-7);
        assert!(r.passed());
        assert!(r.metrics["upper_margin"].abs() < 1e-9);
    }

    #[test]
    fn comparison_examples() {
        let cfg = fd_cfg();
        let two = Subject::from_tolerance("2x", |x| 2.0 * x);
        let dom = Subject::fixture(Fixture::Dominating);
        assert!(check_comparison(&two, &dom, &cfg).unwrap().passed());
        let one = Subject::from_tolerance("x", |x| x);
        let r = check_comparison(&one, &one, &cfg).unwrap();
        assert!(r.passed());
        assert!(r.worst_violation.abs() < 1e-9);
        assert!(matches!(
            check_comparison(&dom, &two, &cfg),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn lambda_monotonicity_examples() {
        let conc = Subject::fixture(Fixture::Conc);
        let r = check_lambda_monotonicity(&conc, 0.04, 0.09, &fd_cfg()).unwrap();
        assert!(r.passed(), "{r:?}");
        let mix = Subject::fixture(Fixture::Mix23);
        assert!(check_lambda_monotonicity(&mix, 0.04, 0.09, &transform_cfg())
            .unwrap()
            .passed());
        let sshape = Subject::fixture(Fixture::SShape);
        let r = check_lambda_monotonicity(&sshape, 0.04, 0.09, &fd_cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::PreconditionFailed);
    }

    #[test]
    fn sshape_inflection() {
        let s = Subject::fixture(Fixture::SShape).surface(&fd_cfg()).unwrap();
        let r = check_inflection(&s, "sshape");
        assert!(r.passed(), "{r:?}");
        assert!((r.metrics["x_hat"] - 1.0).abs() < 0.1);
        assert!(check_zero_set(&s, "sshape").passed());
        let curve = track_inflection_curve(&s);
        assert!(curve.counts().iter().all(|&c| c == 1));
    }

    #[test]
    fn relative_curvature_paths() {
        let cfg = CheckConfig::new(1.0, 1.0, 50.0, 50, 10);
        let r = check_relative_curvature(&Subject::fixture(Fixture::Power2), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Skipped);
        let r = check_relative_curvature(&Subject::fixture(Fixture::RelativeCurvature), &cfg).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.note.as_deref(), Some("predicted convex"));
    }

    #[test]
    fn logconcavity_examples() {
        let market = MarketParams::with_lambda_sq(1.0, 1.0).unwrap();
        let z = grid::uniform(-6.0, 6.0, 120);
        let t = [0.0, 0.5, 1.0];
        let g = check_logconcavity(
            heat::gaussian_terminal(),
            "gaussian",
            Shape::Concave,
            market.clone(),
            &z,
            &t,
            128,
            1e-7,
        )
        .unwrap();
        assert!(g.passed(), "{g:?}");
        let m = check_logconcavity(
            fixtures::mix23(),
            "mix23",
            Shape::Convex,
            market.clone(),
            &z,
            &t,
            128,
            1e-7,
        )
        .unwrap();
        assert!(m.passed(), "{m:?}");
        let wrong = check_logconcavity(
            fixtures::mix23(),
            "mix23",
            Shape::Concave,
            market.clone(),
            &z,
            &t,
            128,
            1e-7,
        )
        .unwrap();
        assert_eq!(wrong.verdict, Verdict::PreconditionFailed);
        for mode in [Shape::Concave, Shape::Convex] {
            let p = check_logconcavity(fixtures::power2(), "power2", mode, market.clone(), &z, &t, 128, 1e-7).unwrap();
            assert!(p.passed());
        }
    }

    #[test]
    fn sign_changes_skip_noise() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(
            sign_changes(&x, &[1.0, 1e-20, -1e-20, 1.0, 1.0], 1e-12),
            Vec::<f64>::new()
        );
        assert_eq!(sign_changes(&x, &[1.0, 1.0, -1.0, -1.0, -1.0], 0.0), vec![2.5]);
    }

    #[test]
    fn report_serializes_as_list() {
        let s = Subject::fixture(Fixture::Log).surface(&transform_cfg()).unwrap();
        let report = PropertyReport {
            records: vec![check_monotonicity(&s, "log", 1e-7)],
        };
        assert!(report.table().contains("monotonicity"));
        assert!(!report.any_failed());
    }
}
