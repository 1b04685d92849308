use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid utility specification: {0}")]
    InvalidSpec(String),

    #[error("operation not supported for {variant} utility: {reason}")]
    UnsupportedVariant {
        variant: &'static str,
        reason: &'static str,
    },

    #[error("{value} lies outside the tabulated range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("condition {inequality} violated at x = {x}: {detail}")]
    ConditionViolated {
        inequality: &'static str,
        x: f64,
        detail: String,
    },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("quadrature did not converge at z = {z}, t = {t}: tail mass {tail:e}")]
    QuadratureTruncation { z: f64, t: f64, tail: f64 },

    #[error("could not bracket H(z, t) = {x} at t = {t} after {expansions} expansions")]
    BracketExpansion { x: f64, t: f64, expansions: usize },

    #[error("root finder did not converge for target {target} after {iterations} iterations")]
    NoConvergence { target: f64, iterations: usize },

    #[error("vanishing denominator {what} at z = {z}, t = {t}")]
    ZeroDenominator { what: &'static str, z: f64, t: f64 },

    #[error("volatility matrix is singular")]
    SingularVolatility,

    #[error("index ({i}, {j}) is on the grid boundary")]
    BoundaryIndex { i: usize, j: usize },

    #[error("explicit step violates stability bound at step {step}: dtau = {dtau:e} > {bound:e}")]
    CflViolation { step: usize, dtau: f64, bound: f64 },

    #[error("tridiagonal solve failed at step {step}: zero pivot in row {row}")]
    TridiagonalFailure { step: usize, row: usize },

    #[error("solution lost positivity at step {step}, node {node}: value {value:e}")]
    PositivityLost { step: usize, node: usize, value: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
