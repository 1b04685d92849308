//! Named terminal preferences used by the tests, the property checks and the CLI.

use std::str::FromStr;

use crate::error::Error;
use crate::expsum::Atom;
use crate::preferences::{AnalyticInverse, UtilitySpec};

/// `I(x) = x^-2 + x^-3`.
pub fn mix23() -> UtilitySpec {
    UtilitySpec::ExpSum(vec![Atom::new(2.0, 1.0), Atom::new(3.0, 1.0)])
}

/// Logarithmic utility, `I(x) = 1/x`, `R(x) = x`.
pub fn log_utility() -> UtilitySpec {
    UtilitySpec::ExpSum(vec![Atom::new(1.0, 1.0)])
}

/// `I(x) = x^-2`, `R(x) = 2x`.
pub fn power2() -> UtilitySpec {
    UtilitySpec::ExpSum(vec![Atom::new(2.0, 1.0)])
}

/// Concave risk tolerance `R(x) = x + 1 - e^-x`.
pub fn conc_r(x: f64) -> f64 {
    x - (-x).exp_m1()
}

pub fn conc_r_xx(x: f64) -> f64 {
    -(-x).exp()
}

/// S-shaped risk tolerance `R(x) = x + 2 (1 - (1 + x) e^-x)`, inflection at `x = 1`.
pub fn sshape_r(x: f64) -> f64 {
    // 1 - (1 + x) e^-x = -expm1(-x) - x e^-x
    x + 2.0 * (-(-x).exp_m1() - x * (-x).exp())
}

pub fn sshape_r_xx(x: f64) -> f64 {
    2.0 * (-x).exp() * (1.0 - x)
}

pub fn sshape_r_xxx(x: f64) -> f64 {
    2.0 * (-x).exp() * (x - 2.0)
}

/// `R(x) = 2x + 1 - e^-x`, which dominates `2x`.
pub fn dominating_r(x: f64) -> f64 {
    2.0 * x - (-x).exp_m1()
}

pub const RELATIVE_SCALE: f64 = 50.0;

/// `I(y) = (y/k)^-2 exp(-y/k)` with `k = 50`. Its heat datum satisfies
/// `log H(z, T) = 2w - e^-w` with `w = z + log k`, so `(log H)_zz < 0` and
/// `(log H)_zzz > 0` everywhere.
pub fn relative_curvature_inverse() -> UtilitySpec {
    let k = RELATIVE_SCALE;
    let inv = AnalyticInverse::new("relative-curvature", 3, move |y, n| {
        let u = y / k;
        // d^n/du^n [u^-2 e^-u] = (-1)^n e^-u sum_j C(n, j) (j + 1)! u^(-2 - j)
        let mut acc = 0.0;
        let mut binom = 1.0;
        let mut fact = 1.0;
        for j in 0..=n {
            fact *= (j + 1) as f64;
            acc += binom * fact * u.powi(-2 - j as i32);
            binom = binom * (n - j) as f64 / (j + 1) as f64;
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sign * (-u).exp() * acc / k.powi(n as i32)
    });
    UtilitySpec::analytic_i(inv).expect("relative-curvature fixture is valid")
}

/// Fixtures addressable by name from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    Mix23,
    Log,
    Power2,
    Conc,
    SShape,
    Dominating,
    Linear3,
    RelativeCurvature,
}

impl Fixture {
    pub const ALL: [Fixture; 8] = [
        Fixture::Mix23,
        Fixture::Log,
        Fixture::Power2,
        Fixture::Conc,
        Fixture::SShape,
        Fixture::Dominating,
        Fixture::Linear3,
        Fixture::RelativeCurvature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Mix23 => "mix23",
            Fixture::Log => "log",
            Fixture::Power2 => "power2",
            Fixture::Conc => "conc",
            Fixture::SShape => "sshape",
            Fixture::Dominating => "dominating",
            Fixture::Linear3 => "linear3",
            Fixture::RelativeCurvature => "relative",
        }
    }

    /// Inverse-marginal spec, if the fixture has one.
    pub fn spec(self) -> Option<UtilitySpec> {
        match self {
            Fixture::Mix23 => Some(mix23()),
            Fixture::Log => Some(log_utility()),
            Fixture::Power2 => Some(power2()),
            Fixture::RelativeCurvature => Some(relative_curvature_inverse()),
            Fixture::Linear3 => Some(UtilitySpec::ExpSum(vec![Atom::new(3.0, 1.0)])),
            Fixture::Conc | Fixture::SShape | Fixture::Dominating => None,
        }
    }

    /// Closed-form risk tolerance, for fixtures defined through `R`.
    pub fn terminal_r(self) -> Option<fn(f64) -> f64> {
        match self {
            Fixture::Conc => Some(conc_r),
            Fixture::SShape => Some(sshape_r),
            Fixture::Dominating => Some(dominating_r),
            Fixture::Log => Some(|x| x),
            Fixture::Power2 => Some(|x| 2.0 * x),
            Fixture::Linear3 => Some(|x| 3.0 * x),
            Fixture::Mix23 | Fixture::RelativeCurvature => None,
        }
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fixture '{s}'")))
    }
}
