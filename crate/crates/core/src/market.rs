use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Log-normal market with `N` risky assets and a savings account.
///
/// Column `i` of `sigma` is the volatility vector of asset `i`; the market
/// price of risk is `lambda = (sigma^T)^-1 (mu - rate 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    sigma: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    mu: DVector<f64>,
    rate: f64,
    horizon: f64,
    lambda: DVector<f64>,
    lambda_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarketSummary {
    pub dim: usize,
    pub rate: f64,
    pub horizon: f64,
    pub lambda: Vec<f64>,
    pub lambda_sq: f64,
}

impl MarketParams {
    /// `sigma` is given row by row.
    pub fn new(sigma: &[Vec<f64>], mu: &[f64], rate: f64, horizon: f64) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::InvalidArgument("market needs at least one risky asset".into()));
        }
        if sigma.len() != n || sigma.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "volatility matrix must be {n}x{n} to match the drift vector"
            )));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !rate.is_finite() || mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("rate and drift must be finite".into()));
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| sigma[i][j]);
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "volatility matrix has non-finite entries".into(),
            ));
        }
        let sigma_inv = sigma.clone().try_inverse().ok_or(Error::SingularVolatility)?;
        if sigma_inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularVolatility);
        }
        let mu = DVector::from_column_slice(mu);
        let excess = mu.add_scalar(-rate);
        let lambda = sigma_inv.transpose() * excess;
        let lambda_sq = lambda.norm_squared();
        Ok(Self {
            sigma,
            sigma_inv,
            mu,
            rate,
            horizon,
            lambda,
            lambda_sq,
        })
    }

    /// One asset with unit volatility and `lambda = sqrt(lambda_sq)`.
    pub fn with_lambda_sq(lambda_sq: f64, horizon: f64) -> Result<Self> {
        if !(lambda_sq >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "|lambda|^2 must be non-negative, got {lambda_sq}"
            )));
        }
        Self::new(&[vec![1.0]], &[lambda_sq.sqrt()], 0.0, horizon)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn lambda_sq(&self) -> f64 {
        self.lambda_sq
    }

    /// `sigma^-1 lambda`, the per-unit-risk-tolerance allocation.
    pub fn allocation_direction(&self) -> DVector<f64> {
        &self.sigma_inv * &self.lambda
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if t >= 0.0 && t <= self.horizon {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            })
        }
    }

    pub fn summary(&self) -> MarketSummary {
        MarketSummary {
            dim: self.dim(),
            rate: self.rate,
            horizon: self.horizon,
            lambda: self.lambda.iter().copied().collect(),
            lambda_sq: self.lambda_sq,
        }
    }
}
