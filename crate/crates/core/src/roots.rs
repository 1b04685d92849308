//! Inversion of strictly increasing scalar functions.
//!
//! The solver expands a bracket geometrically from a seed until the sign of
//! the residual changes, then runs Newton steps that are rejected in favour
//! of bisection whenever they leave the bracket or stall.

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub initial_width: f64,
    pub max_expansions: usize,
    pub max_iterations: usize,
    /// Stop once the bracket or Newton step is below `rel_step * max(1, |z|)`.
    pub rel_step: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            initial_width: 1.0,
            max_expansions: 64,
            max_iterations: 200,
            rel_step: 4.0 * f64::EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootFailure {
    Bracket { expansions: usize },
    NoConvergence { iterations: usize },
}

/// Finds the zero of an increasing function `f`, which returns the residual
/// and its derivative. Residuals of `-inf`/`+inf` are accepted as "below" and
/// "above" the root; NaN is treated as a failure to bracket.
pub fn solve_increasing<F>(mut f: F, seed: f64, opts: &RootOptions) -> Result<f64, RootFailure>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (f0, _) = f(seed);
    if f0 == 0.0 {
        return Ok(seed);
    }
    if f0.is_nan() {
        return Err(RootFailure::Bracket { expansions: 0 });
    }

    // Walk away from the seed in the direction of the root.
    let dir = if f0 < 0.0 { 1.0 } else { -1.0 };
    let mut near = seed;
    let mut width = opts.initial_width;
    let mut far = seed;
    let mut found = false;
    for k in 0..opts.max_expansions {
        far = near + dir * width;
        let (ff, _) = f(far);
        if ff.is_nan() {
            return Err(RootFailure::Bracket { expansions: k + 1 });
        }
        if ff == 0.0 {
            return Ok(far);
        }
        if (ff > 0.0) == (dir > 0.0) {
            found = true;
            break;
        }
        near = far;
        width *= 2.0;
    }
    if !found {
        return Err(RootFailure::Bracket {
            expansions: opts.max_expansions,
        });
    }
    let (mut lo, mut hi) = if dir > 0.0 { (near, far) } else { (far, near) };

    let mut z = 0.5 * (lo + hi);
    let mut prev_step = hi - lo;
    for _ in 0..opts.max_iterations {
        let (fz, dfz) = f(z);
        if fz == 0.0 {
            return Ok(z);
        }
        if fz < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let tol = opts.rel_step * z.abs().max(1.0);
        if hi - lo <= tol {
            return Ok(0.5 * (lo + hi));
        }

        let newton = if dfz.is_finite() && dfz > 0.0 && fz.is_finite() {
            z - fz / dfz
        } else {
            f64::NAN
        };
        let step_ok = newton > lo && newton < hi && (newton - z).abs() < 0.5 * prev_step.abs();
        let next = if step_ok { newton } else { 0.5 * (lo + hi) };
        prev_step = next - z;
        if prev_step.abs() <= tol {
            return Ok(next);
        }
        z = next;
    }
    Err(RootFailure::NoConvergence {
        iterations: opts.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let root = solve_increasing(|z| (z * z * z - 8.0, 3.0 * z * z), 0.0, &RootOptions::default()).unwrap();
        assert!((root - 2.0).abs() < 1e-14);
    }

    #[test]
    fn expands_downward() {
        let root = solve_increasing(|z| (z + 1000.0, 1.0), 0.0, &RootOptions::default()).unwrap();
        assert!((root + 1000.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_residuals_are_ordered() {
        // log(e^z) - 700 evaluated naively overflows past z ~ 709.
        let f = |z: f64| (z.exp().ln() - 700.0, 1.0);
        let root = solve_increasing(f, 0.0, &RootOptions::default()).unwrap();
        assert!((root - 700.0).abs() < 1e-10);
    }

    #[test]
    fn reports_bracket_failure() {
        let opts = RootOptions {
            max_expansions: 5,
            ..RootOptions::default()
        };
        let err = solve_increasing(|z| (z - 1e6, 1.0), 0.0, &opts).unwrap_err();
        assert_eq!(err, RootFailure::Bracket { expansions: 5 });
    }

    #[test]
    fn flat_derivative_falls_back_to_bisection() {
        let f = |z: f64| (z.powi(3) - 0.001, 0.0);
        let root = solve_increasing(f, 1.0, &RootOptions::default()).unwrap();
        assert!((root - 0.1).abs() < 1e-14);
    }
}
