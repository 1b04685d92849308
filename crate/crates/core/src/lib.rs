//! Risk tolerance surfaces for the Merton investment problem.
//!
//! The risk tolerance `r(x, t) = -u_x / u_xx` solves Black's equation
//! `r_t + |lambda|^2 r^2 r_xx / 2 = 0`. This crate builds `r` two ways: through
//! the harmonic function `H` of the backward heat equation, with
//! `r(H(z, t), t) = H_z(z, t)`, and by a direct finite-difference solve. On top
//! of both sit checkers for the structural properties of `r` and the Merton
//! allocation layer.

// `!(a > b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expsum;
pub mod fd;
pub mod fixtures;
pub mod grid;
pub mod heat;
pub mod io;
pub mod market;
pub mod merton;
pub mod preferences;
pub mod properties;
pub mod quadrature;
pub mod roots;
pub mod surface;
pub mod transform;

pub use error::{Error, Result};
pub use expsum::Atom;
pub use fd::{FdConfig, Scheme};
pub use heat::{EvaluatorKind, HeatDerivs, HeatSurface, Terminal, ZFunction};
pub use market::MarketParams;
pub use merton::PolicySample;
pub use preferences::{AnalyticInverse, ConditionConstants, TabulatedR, UtilitySpec};
pub use properties::{Check, CheckConfig, CheckRecord, PropertyReport, Subject, Verdict};
pub use surface::{Provenance, RTSurface};
pub use transform::{RelativeRiskTolerance, RiskTolerance, Steps};
