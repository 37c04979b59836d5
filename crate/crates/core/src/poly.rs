//! Sparse multivariate polynomials with real coefficients.
//!
//! Used for the exact group law, the coefficients of left-invariant vector
//! fields, and as an exact symbolic oracle for the differential operators.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Coefficients below this magnitude are dropped after arithmetic.
const PRUNE: f64 = 1e-15;

#[derive(Clone, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u16>, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        if c != 0.0 {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index out of range");
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.terms.insert(e, 1.0);
        p
    }

    pub fn monomial(coeff: f64, exps: &[u16]) -> Self {
        let mut p = Self::zero(exps.len());
        if coeff != 0.0 {
            p.terms.insert(exps.to_vec(), coeff);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u16], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    /// Total degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&k| k as usize).sum())
            .max()
    }

    /// Degree where variable `i` carries weight `weights[i]`.
    pub fn weighted_degree(&self, weights: &[usize]) -> Option<usize> {
        self.terms
            .keys()
            .map(|e| e.iter().zip(weights).map(|(&k, &w)| k as usize * w).sum())
            .max()
    }

    fn add_term(&mut self, exps: Vec<u16>, c: f64) {
        let entry = self.terms.entry(exps).or_insert(0.0);
        *entry += c;
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|_, c| c.abs() > PRUNE);
        self
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero(self.nvars);
        }
        Self {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
        .pruned()
    }

    pub fn deriv(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut e2 = e.clone();
                e2[i] -= 1;
                out.add_term(e2, c * e[i] as f64);
            }
        }
        out.pruned()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(*c, |acc, (&k, &xi)| if k == 0 { acc } else { acc * xi.powi(k as i32) })
            })
            .sum()
    }

    /// Substitute `x_i = value` for every `(i, value)` pair, keeping the
    /// number of variables unchanged.
    pub fn substitute(&self, assignments: &[(usize, f64)]) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            let mut coeff = *c;
            for &(i, v) in assignments {
                if e2[i] > 0 {
                    coeff *= v.powi(e2[i] as i32);
                    e2[i] = 0;
                }
            }
            out.add_term(e2, coeff);
        }
        out.pruned()
    }

    /// Reinterpret in a larger variable set: variable `i` becomes
    /// variable `map[i]` of a polynomial in `nvars` variables.
    pub fn remap(&self, nvars: usize, map: &[usize]) -> Self {
        let mut out = Self::zero(nvars);
        for (e, c) in &self.terms {
            let mut e2 = vec![0u16; nvars];
            for (i, &k) in e.iter().enumerate() {
                e2[map[i]] += k;
            }
            out.add_term(e2, *c);
        }
        out.pruned()
    }

    /// Keep only the first `nvars` variables; every dropped variable must
    /// be absent from all monomials.
    pub fn truncate_vars(&self, nvars: usize) -> Self {
        let mut out = Self::zero(nvars);
        for (e, c) in &self.terms {
            assert!(
                e[nvars..].iter().all(|&k| k == 0),
                "truncate_vars would drop a live variable"
            );
            out.add_term(e[..nvars].to_vec(), *c);
        }
        out
    }

    /// `p(s_0 x_0, ..., s_{n-1} x_{n-1})`.
    pub fn scale_vars(&self, s: &[f64]) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let f: f64 = e.iter().zip(s).map(|(&k, &si)| si.powi(k as i32)).product();
            out.add_term(e.clone(), c * f);
        }
        out.pruned()
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut acc = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// `phi(self)` for a univariate polynomial `phi` given by its
    /// coefficients in increasing degree (Horner scheme).
    pub fn compose_univariate(&self, phi: &[f64]) -> Self {
        let mut acc = Self::zero(self.nvars);
        for &c in phi.iter().rev() {
            acc = &(&acc * self) + &Self::constant(self.nvars, c);
        }
        acc
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nvars).map(|i| self.deriv(i).eval(x)).collect()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Precomputed first and second derivatives for repeated evaluation.
#[derive(Clone, Debug)]
pub struct PolyJetEval {
    value: Poly,
    grad: Vec<Poly>,
    hess: Vec<Poly>,
}

impl PolyJetEval {
    pub fn new(p: &Poly) -> Self {
        let n = p.nvars();
        let grad: Vec<Poly> = (0..n).map(|i| p.deriv(i)).collect();
        let mut hess = Vec::with_capacity(n * n);
        for gi in &grad {
            for j in 0..n {
                hess.push(gi.deriv(j));
            }
        }
        Self {
            value: p.clone(),
            grad,
            hess,
        }
    }

    pub fn nvars(&self) -> usize {
        self.value.nvars()
    }

    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        (
            self.value.eval(x),
            self.grad.iter().map(|g| g.eval(x)).collect(),
            self.hess.iter().map(|h| h.eval(x)).collect(),
        )
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*x{i}")?,
                    _ => write!(f, "*x{i}^{k}")?,
                }
            }
        }
        Ok(())
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), *c);
        }
        out.pruned()
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -*c);
        }
        out.pruned()
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = Poly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Vec<u16> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out.pruned()
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, rhs: Poly) -> Poly {
        &self + &rhs
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        &self - &rhs
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        &self * &rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_eval() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &(&x * &y) + &Poly::constant(2, 3.0);
        assert_eq!(p.eval(&[2.0, 5.0]), 13.0);
        assert_eq!(p.deriv(0).eval(&[2.0, 5.0]), 5.0);
        assert!((&p - &p).is_zero());
    }

    #[test]
    fn compose_matches_direct_evaluation() {
        let x = Poly::var(1, 0);
        let f = &(&x * &x) + &Poly::constant(1, 1.0);
        // phi(s) = 2 - s + s^3
        let g = f.compose_univariate(&[2.0, -1.0, 0.0, 1.0]);
        let s: f64 = 0.3 * 0.3 + 1.0;
        assert!((g.eval(&[0.3]) - (2.0 - s + s.powi(3))).abs() < 1e-14);
    }

    #[test]
    fn substitute_and_remap() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &x * &y;
        let q = p.substitute(&[(1, 0.0)]);
        assert!(q.is_zero());
        let r = p.remap(4, &[1, 3]);
        assert_eq!(r.eval(&[9.0, 2.0, 9.0, 3.0]), 6.0);
    }

    #[test]
    fn weighted_degree_uses_weights() {
        let t = Poly::var(3, 2);
        let x = Poly::var(3, 0);
        let p = &t + &(&x * &x);
        assert_eq!(p.weighted_degree(&[1, 1, 2]), Some(2));
        assert_eq!(p.degree(), Some(2));
    }
}
