//! Risk tolerance on an `(x, t)` grid, whichever way it was produced.
//!
//! Arrays are indexed `[time, wealth]`. A node at `x = 0` is allowed and
//! carries the boundary value `r = 0`; it is excluded from residuals and from
//! every ratio that divides by `x`.

use std::io::{self, Write};

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    #[serde(rename = "transform")]
    Transform,
    #[serde(rename = "fd")]
    FiniteDifference,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Transform => "transform",
            Provenance::FiniteDifference => "fd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RTSurface {
    x: Vec<f64>,
    t: Vec<f64>,
    r: Array2<f64>,
    r_x: Array2<f64>,
    r_xx: Array2<f64>,
    provenance: Provenance,
    lambda_sq: f64,
    horizon: f64,
}

impl RTSurface {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x: Vec<f64>,
        t: Vec<f64>,
        r: Array2<f64>,
        r_x: Array2<f64>,
        r_xx: Array2<f64>,
        provenance: Provenance,
        lambda_sq: f64,
        horizon: f64,
    ) -> Result<Self> {
        grid::check_increasing("x", &x)?;
        grid::check_increasing("t", &t)?;
        if x.len() < 3 || t.len() < 3 {
            return Err(Error::InvalidArgument("surface grids need at least three nodes".into()));
        }
        if x[0] < 0.0 || t[0] < 0.0 || *t.last().unwrap() > horizon {
            return Err(Error::InvalidArgument(
                "surface grid outside x >= 0, t in [0, T]".into(),
            ));
        }
        let shape = (t.len(), x.len());
        for (name, a) in [("r", &r), ("r_x", &r_x), ("r_xx", &r_xx)] {
            if a.dim() != shape {
                return Err(Error::InvalidArgument(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    a.dim()
                )));
            }
        }
        Ok(Self {
            x,
            t,
            r,
            r_x,
            r_xx,
            provenance,
            lambda_sq,
            horizon,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn r_x(&self) -> &Array2<f64> {
        &self.r_x
    }

    pub fn r_xx(&self) -> &Array2<f64> {
        &self.r_xx
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn lambda_sq(&self) -> f64 {
        self.lambda_sq
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Every `step`-th time row, always keeping the first and last.
    pub fn every_nth_time(&self, step: usize) -> Result<Self> {
        let n = self.t.len();
        let step = step.max(1);
        let mut rows: Vec<usize> = (0..n).step_by(step).collect();
        if *rows.last().unwrap() != n - 1 {
            rows.push(n - 1);
        }
        let pick = |a: &Array2<f64>| a.select(ndarray::Axis(0), &rows);
        Self::new(
            self.x.clone(),
            rows.iter().map(|&i| self.t[i]).collect(),
            pick(&self.r),
            pick(&self.r_x),
            pick(&self.r_xx),
            self.provenance,
            self.lambda_sq,
            self.horizon,
        )
    }

    /// Index of the first node with `x > 0`.
    pub fn first_positive(&self) -> usize {
        self.x.iter().position(|&x| x > 0.0).unwrap_or(self.x.len())
    }

    /// `r_t` from three-point differences in time.
    pub fn r_t(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.r.dim());
        for j in 0..self.x.len() {
            let col: Vec<f64> = self.r.column(j).to_vec();
            for i in 0..self.t.len() {
                out[[i, j]] = grid::d1(&self.t, &col, i);
            }
        }
        out
    }

    /// Relative risk tolerance `r / x`; at `x = 0` the slope `r_x` is stored.
    pub fn relative(&self) -> Array2<f64> {
        Array2::from_shape_fn(self.r.dim(), |(i, j)| {
            let x = self.x[j];
            if x > 0.0 {
                self.r[[i, j]] / x
            } else {
                self.r_x[[i, j]]
            }
        })
    }

    /// Risk aversion `1 / r`.
    pub fn gamma(&self) -> Array2<f64> {
        self.r.mapv(f64::recip)
    }

    /// `r_t + |lambda|^2 r^2 r_xx / 2` at an interior node, with `r_t` from
    /// central differences in time.
    pub fn black_residual(&self, it: usize, ix: usize) -> Result<f64> {
        if it == 0 || it + 1 >= self.t.len() || ix < 1 || ix + 1 >= self.x.len() || self.x[ix] <= 0.0 {
            return Err(Error::BoundaryIndex { i: it, j: ix });
        }
        let col: Vec<f64> = (it - 1..=it + 1).map(|k| self.r[[k, ix]]).collect();
        let r_t = grid::d1(&self.t[it - 1..=it + 1], &col, 1);
        let r = self.r[[it, ix]];
        Ok(r_t + 0.5 * self.lambda_sq * r * r * self.r_xx[[it, ix]])
    }

    /// Black residual on every node; NaN where it is undefined.
    pub fn residual_grid(&self) -> Array2<f64> {
        Array2::from_shape_fn(self.r.dim(), |(i, j)| self.black_residual(i, j).unwrap_or(f64::NAN))
    }

    /// `max |self - other| / max |other|` over a shared grid.
    pub fn sup_relative_diff(&self, other: &RTSurface) -> Result<f64> {
        self.sup_relative_diff_values(&other.x, &other.t, &other.r)
    }

    pub fn sup_relative_diff_values(&self, x: &[f64], t: &[f64], values: &Array2<f64>) -> Result<f64> {
        if x != self.x.as_slice() || t != self.t.as_slice() {
            return Err(Error::InvalidArgument("surfaces live on different grids".into()));
        }
        Ok(sup_relative(&self.r, values))
    }

    /// Empirical constants of the spatial and temporal estimates over `x > 0`.
    pub fn estimates(&self) -> SurfaceEstimates {
        let r_t = self.r_t();
        let mut e = SurfaceEstimates::empty();
        for i in 0..self.t.len() {
            for j in self.first_positive()..self.x.len() {
                let x = self.x[j];
                let (r, rx, rxx) = (self.r[[i, j]], self.r_x[[i, j]], self.r_xx[[i, j]]);
                e.ratio.push(r / x);
                e.slope.push(rx);
                e.x_r_xx = e.x_r_xx.max((x * rxx).abs());
                e.r_r_xx = e.r_r_xx.max((r * rxx).abs());
                e.square_xx = e.square_xx.max((2.0 * rx * rx + 2.0 * r * rxx).abs());
                // x^n d^n(r/x)/dx^n for n = 1, 2.
                e.relative_1.push(rx - r / x);
                e.relative_2.push(x * rxx - 2.0 * rx + 2.0 * r / x);
                let rt = r_t[[i, j]].abs();
                if rt > 1e-12 * r.abs().max(1.0) {
                    e.time.push(rt / x);
                }
            }
        }
        e
    }

    /// CSV with header `x,t,r,rx,rxx,rtilde,gamma,residual,provenance`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,t,r,rx,rxx,rtilde,gamma,residual,provenance")?;
        let rel = self.relative();
        let res = self.residual_grid();
        let label = self.provenance.label();
        for (i, &t) in self.t.iter().enumerate() {
            for (j, &x) in self.x.iter().enumerate() {
                let r = self.r[[i, j]];
                writeln!(
                    w,
                    "{x},{t},{r},{},{},{},{},{},{label}",
                    self.r_x[[i, j]],
                    self.r_xx[[i, j]],
                    rel[[i, j]],
                    r.recip(),
                    res[[i, j]],
                )?;
            }
        }
        Ok(())
    }
}

pub fn sup_relative(a: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    let num = a.iter().zip(reference).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let den = reference.iter().map(|q| q.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Empirical range of a quantity over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }
}

/// `k0 <= r/x <= K0`, `k1 <= r_x <= K1`, `|x r_xx| <= K2`, the two readings of
/// the semi super-harmonic bound, ranges of `x^n (r/x)^(n)` and
/// `m <= |r_t|/x <= M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceEstimates {
    pub ratio: Range,
    pub slope: Range,
    pub x_r_xx: f64,
    pub r_r_xx: f64,
    pub square_xx: f64,
    pub relative_1: Range,
    pub relative_2: Range,
    pub time: Range,
}

impl SurfaceEstimates {
    fn empty() -> Self {
        Self {
            ratio: Range::empty(),
            slope: Range::empty(),
            x_r_xx: 0.0,
            r_r_xx: 0.0,
            square_xx: 0.0,
            relative_1: Range::empty(),
            relative_2: Range::empty(),
            time: Range::empty(),
        }
    }
}
