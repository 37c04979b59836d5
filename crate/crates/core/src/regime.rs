//! Critical exponents of the three semilinear problems, in exact rational
//! arithmetic, and the classification of a given `p` against them.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::group::StratifiedAlgebra;

/// Reduced fraction with positive denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Rational {
    /// Panics on a zero denominator.
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Self {
            num: s * num / g,
            den: s * den / g,
        }
    }

    pub fn num(self) -> i64 {
        self.num
    }

    pub fn den(self) -> i64 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Best continued-fraction approximation with denominator at most
    /// `10^4`, returned only if it matches `x` to relative `1e-13`.
    pub fn recover(x: f64) -> Option<Self> {
        if !x.is_finite() || x.abs() > 1e12 {
            return None;
        }
        let (mut h0, mut h1) = (0i64, 1i64);
        let (mut k0, mut k1) = (1i64, 0i64);
        let mut y = x;
        for _ in 0..40 {
            let a = y.floor();
            let ai = a as i64;
            let h2 = ai.checked_mul(h1)?.checked_add(h0)?;
            let k2 = ai.checked_mul(k1)?.checked_add(k0)?;
            if k2 > 10_000 {
                return None;
            }
            (h0, h1, k0, k1) = (h1, h2, k1, k2);
            if ((h1 as f64 / k1 as f64) - x).abs() <= 1e-13 * x.abs().max(1.0) {
                return Some(Self::new(h1, k1));
            }
            let frac = y - a;
            if frac == 0.0 {
                return None;
            }
            y = 1.0 / frac;
        }
        None
    }

    /// Parse `"a/b"` or an integer.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        match s.split_once('/') {
            Some((a, b)) => {
                let num: i64 = a.trim().parse().ok()?;
                let den: i64 = b.trim().parse().ok()?;
                (den != 0).then(|| Self::new(num, den))
            }
            None => Some(Self::new(s.parse().ok()?, 1)),
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Parse an exponent given either as a decimal or as `"a/b"`.
pub fn parse_exponent(s: &str) -> Option<f64> {
    Rational::parse(s).map(Rational::to_f64).or_else(|| s.trim().parse().ok())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }
}

/// Tolerance for calling a floating `p` equal to a threshold.
pub const CRITICAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Cell {
    /// `None` when the threshold is infinite (dimension at most 2 for the
    /// subelliptic problem); every `p > 1` is then subcritical.
    pub threshold: Option<f64>,
    /// The threshold as a fraction, when the dimension is rational.
    pub exact: Option<Rational>,
    pub regime: Regime,
}

impl Cell {
    fn new(threshold: Option<f64>, exact: Option<Rational>, p: f64) -> Self {
        let regime = match threshold {
            None => Regime::Subcritical,
            Some(t) => {
                if (p - t).abs() <= CRITICAL_TOL * t {
                    Regime::Critical
                } else if p < t {
                    Regime::Subcritical
                } else {
                    Regime::Supercritical
                }
            }
        };
        Self {
            threshold,
            exact,
            regime,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProblemRow {
    /// Threshold with the homogeneous dimension `Q`.
    pub sharp: Cell,
    /// Threshold with the curvature-dimension `D`.
    pub cd: Cell,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeTable {
    pub preset: String,
    pub p: f64,
    pub q: f64,
    pub big_d: f64,
    pub parabolic: ProblemRow,
    pub hyperbolic: ProblemRow,
    pub subelliptic: ProblemRow,
}

/// The three thresholds for a rational dimension `n = a/b`, with `None`
/// where the threshold is infinite.
pub fn exact_thresholds(n: Rational) -> [Option<Rational>; 3] {
    let (a, b) = (n.num(), n.den());
    [
        (a > 0).then(|| Rational::new(a + 2 * b, a)),
        (a > b).then(|| Rational::new(a + b, a - b)),
        (a > 2 * b).then(|| Rational::new(a, a - 2 * b)),
    ]
}

/// `1 + 2/n`.
pub fn parabolic_threshold(n: f64) -> Option<f64> {
    (n > 0.0).then(|| 1.0 + 2.0 / n)
}

/// `(n + 1)/(n - 1)`, infinite for `n <= 1`.
pub fn hyperbolic_threshold(n: f64) -> Option<f64> {
    (n > 1.0).then(|| (n + 1.0) / (n - 1.0))
}

/// `n/(n - 2)`, infinite for `n <= 2`.
pub fn subelliptic_threshold(n: f64) -> Option<f64> {
    (n > 2.0).then(|| n / (n - 2.0))
}

/// Thresholds and regimes for `p` on a step-2 group, using `Q` and the
/// curvature-dimension `D` from [`StratifiedAlgebra::cd_parameters`].
pub fn classify(alg: &StratifiedAlgebra, p: f64) -> Result<RegimeTable> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(invalid("p", format!("must exceed 1, got {p}")));
    }
    let q = alg.hom_dim() as f64;
    let big_d = alg.cd_parameters()?.big_d;
    let exact = |n: f64| Rational::recover(n).map(exact_thresholds);
    let (eq, ed) = (exact(q), exact(big_d));
    let row = |k: usize, f: fn(f64) -> Option<f64>| ProblemRow {
        sharp: Cell::new(f(q), eq.and_then(|t| t[k]), p),
        cd: Cell::new(f(big_d), ed.and_then(|t| t[k]), p),
    };
    Ok(RegimeTable {
        preset: alg.name().to_string(),
        p,
        q,
        big_d,
        parabolic: row(0, parabolic_threshold),
        hyperbolic: row(1, hyperbolic_threshold),
        subelliptic: row(2, subelliptic_threshold),
    })
}

/// One row of a flattened regime table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CellRow {
    pub problem: &'static str,
    pub variant: &'static str,
    pub cell: Cell,
}

impl RegimeTable {
    /// The six cells in a fixed order.
    pub fn cells(&self) -> Vec<CellRow> {
        let mut out = Vec::with_capacity(6);
        for (problem, row) in [
            ("parabolic", &self.parabolic),
            ("hyperbolic", &self.hyperbolic),
            ("subelliptic", &self.subelliptic),
        ] {
            out.push(CellRow { problem, variant: "sharp", cell: row.sharp });
            out.push(CellRow { problem, variant: "cd", cell: row.cd });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals_reduce() {
        assert_eq!(Rational::new(6, 4), Rational::new(3, 2));
        assert_eq!(Rational::new(3, -6).to_string(), "-1/2");
        assert_eq!(Rational::parse(" 5/3 "), Some(Rational::new(5, 3)));
        assert_eq!(Rational::parse("1/0"), None);
        assert_eq!(parse_exponent("1.25"), Some(1.25));
        assert_eq!(Rational::recover(9.0 / 7.0), Some(Rational::new(9, 7)));
        assert_eq!(Rational::recover(std::f64::consts::PI), None);
    }

    #[test]
    fn heisenberg_examples() {
        let h1 = StratifiedAlgebra::heisenberg(1).unwrap();
        assert_eq!(classify(&h1, 1.5).unwrap().parabolic.sharp.regime, Regime::Critical);
        assert_eq!(classify(&h1, 1.25).unwrap().parabolic.cd.regime, Regime::Critical);
        assert_eq!(classify(&h1, 5.0 / 3.0).unwrap().hyperbolic.sharp.regime, Regime::Critical);
        assert!(classify(&h1, 1.0).is_err());
        let t = classify(&h1, 1.1).unwrap();
        assert_eq!(t.hyperbolic.cd.exact, Some(Rational::new(9, 7)));
        assert_eq!(t.subelliptic.sharp.exact, Some(Rational::new(2, 1)));
    }
}
