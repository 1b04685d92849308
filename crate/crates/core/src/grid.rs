//! Grids and three-point difference weights on non-uniform nodes.

use crate::error::{Error, Result};

/// `n + 1` equally spaced nodes from `lo` to `hi`, endpoints exact.
pub fn uniform(lo: f64, hi: f64, intervals: usize) -> Vec<f64> {
    let h = (hi - lo) / intervals as f64;
    (0..=intervals)
        .map(|k| if k == intervals { hi } else { lo + h * k as f64 })
        .collect()
}

pub fn check_increasing(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} grid has non-finite nodes")));
    }
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "{name} grid must be strictly increasing"
        )));
    }
    Ok(())
}

/// First derivative of `f` at node `i` from three neighbouring nodes, second
/// order on any spacing. Uses one-sided stencils at the ends.
pub fn d1(x: &[f64], f: &[f64], i: usize) -> f64 {
    let n = x.len();
    debug_assert!(n >= 3 && f.len() == n);
    if i == 0 {
        let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
        -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2]
    } else if i == n - 1 {
        let (h1, h2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
        h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2]
            + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * f[n - 1]
    } else {
        let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1]
    }
}

/// Second derivative at node `i` from the three nodes around it (shifted
/// inward at the ends).
pub fn d2(x: &[f64], f: &[f64], i: usize) -> f64 {
    let n = x.len();
    let c = i.clamp(1, n - 2);
    let (h1, h2) = (x[c] - x[c - 1], x[c + 1] - x[c]);
    2.0 / (h1 + h2) * (f[c - 1] / h1 - f[c] * (1.0 / h1 + 1.0 / h2) + f[c + 1] / h2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_endpoints() {
        let g = uniform(0.0, 50.0, 512);
        assert_eq!(g.len(), 513);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[512], 50.0);
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let x = [0.0, 0.3, 1.0, 1.2, 2.5];
        let f: Vec<f64> = x.iter().map(|v| 3.0 * v * v - v + 2.0).collect();
        for i in 0..x.len() {
            assert!((d1(&x, &f, i) - (6.0 * x[i] - 1.0)).abs() < 1e-12, "i = {i}");
            assert!((d2(&x, &f, i) - 6.0).abs() < 1e-11);
        }
    }

    #[test]
    fn rejects_unsorted() {
        assert!(check_increasing("x", &[0.0, 1.0, 1.0]).is_err());
        assert!(check_increasing("x", &[0.0, 1.0, 2.0]).is_ok());
    }
}
