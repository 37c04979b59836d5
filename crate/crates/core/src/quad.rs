//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut evals = 0usize;
    recurse(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut evals)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    *evals += 2;
    if *evals > 20_000_000 {
        return Err(Error::QuadratureNonConvergence(
            "evaluation budget exhausted".into(),
        ));
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::QuadratureNonConvergence(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureNonConvergence(format!(
            "recursion limit on [{a}, {b}], error estimate {}",
            delta.abs() / 15.0
        )));
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals)?
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evals)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_known_functions() {
        let v = adaptive_simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
        let v = adaptive_simpson(|x| (-x * x).exp(), -8.0, 8.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn reports_non_convergence() {
        assert!(adaptive_simpson(|x| 1.0 / x, -1.0, 1.0, 1e-12).is_err());
    }
}
