//! Left-invariant vector fields and the operators built from them.
//!
//! Everything here is exact: fields have polynomial coefficients derived
//! from the group law, and operators act either symbolically on
//! polynomials or pointwise on second-order jets of smooth functions.
//! The grid discretization lives in [`crate::grid`].

use crate::error::{Error, Result};
use crate::group::StratifiedAlgebra;
use crate::poly::{Poly, PolyJetEval};

/// A left-invariant field `sum_j c_j(x) d/dx_j` extending basis vector
/// `index` at the origin.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub index: usize,
    pub coeffs: Vec<Poly>,
}

impl VectorField {
    /// Apply the field to a polynomial.
    pub fn apply_poly(&self, f: &Poly) -> Poly {
        let mut out = Poly::zero(f.nvars());
        for (j, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                out = &out + &(c * &f.deriv(j));
            }
        }
        out
    }

    pub fn coeffs_at(&self, x: &[f64]) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.eval(x)).collect()
    }
}

/// The left-invariant frame `X_k f(x) = d/ds f(x * s e_k)` at `s = 0`.
pub fn left_invariant_basis(alg: &StratifiedAlgebra) -> Vec<VectorField> {
    (0..alg.total_dim())
        .map(|k| VectorField {
            index: k,
            coeffs: alg.field_coeffs(k).to_vec(),
        })
        .collect()
}

/// Value, gradient and row-major Hessian of a function at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

/// A twice differentiable function on the group in exponential coordinates.
pub trait SmoothFn: Sync {
    fn dim(&self) -> usize;
    fn jet(&self, x: &[f64]) -> Jet2;
    fn value(&self, x: &[f64]) -> f64 {
        self.jet(x).value
    }
}

impl SmoothFn for PolyJetEval {
    fn dim(&self) -> usize {
        self.nvars()
    }

    fn jet(&self, x: &[f64]) -> Jet2 {
        let (value, grad, hess) = self.eval(x);
        Jet2 { value, grad, hess }
    }
}

/// `profile(q(x))` for a polynomial `q` and a scalar profile returning
/// `[value, first derivative, second derivative]`.
pub struct ProfileOfPoly<F> {
    inner: PolyJetEval,
    inner_value: Poly,
    profile: F,
}

impl<F: Fn(f64) -> [f64; 3] + Sync> ProfileOfPoly<F> {
    pub fn new(inner: &Poly, profile: F) -> Self {
        Self {
            inner: PolyJetEval::new(inner),
            inner_value: inner.clone(),
            profile,
        }
    }
}

impl<F: Fn(f64) -> [f64; 3] + Sync> SmoothFn for ProfileOfPoly<F> {
    fn dim(&self) -> usize {
        self.inner.nvars()
    }

    fn jet(&self, x: &[f64]) -> Jet2 {
        let (q, gq, hq) = self.inner.eval(x);
        let [v, d1, d2] = (self.profile)(q);
        let n = gq.len();
        let grad = gq.iter().map(|g| d1 * g).collect();
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                hess[i * n + j] = d2 * gq[i] * gq[j] + d1 * hq[i * n + j];
            }
        }
        Jet2 {
            value: v,
            grad,
            hess,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.profile)(self.inner_value.eval(x))[0]
    }
}

/// Sub-Laplacian, carre du champ and its vertical analogue for one algebra.
///
/// `L f = sum_k X_k^2 f` is stored as `sum_jl a_jl d_jl f + sum_l b_l d_l f`
/// with `a = sum_k c_k c_k^T` and `b_l = sum_k X_k c_kl`.
#[derive(Clone, Debug)]
pub struct DiffOps {
    n: usize,
    d: usize,
    step: usize,
    fields: Vec<VectorField>,
    a: Vec<Poly>,
    b: Vec<Poly>,
}

impl DiffOps {
    pub fn new(alg: &StratifiedAlgebra) -> Self {
        let n = alg.total_dim();
        let d = alg.horizontal_dim();
        let fields = left_invariant_basis(alg);
        let mut a = vec![Poly::zero(n); n * n];
        let mut b = vec![Poly::zero(n); n];
        for f in &fields[..d] {
            for j in 0..n {
                for l in 0..n {
                    let prod = &f.coeffs[j] * &f.coeffs[l];
                    if !prod.is_zero() {
                        a[j * n + l] = &a[j * n + l] + &prod;
                    }
                }
            }
            for (l, bl) in b.iter_mut().enumerate() {
                *bl = &*bl + &f.apply_poly(&f.coeffs[l]);
            }
        }
        Self {
            n,
            d,
            step: alg.step(),
            fields,
            a,
            b,
        }
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    fn require_step2(&self) -> Result<()> {
        if self.step != 2 {
            return Err(Error::WrongStep {
                required: 2,
                got: self.step,
            });
        }
        Ok(())
    }

    pub fn sub_laplacian_poly(&self, f: &Poly) -> Poly {
        let mut out = Poly::zero(self.n);
        for x in &self.fields[..self.d] {
            out = &out + &x.apply_poly(&x.apply_poly(f));
        }
        out
    }

    /// `Gamma(f, g) = sum_k (X_k f)(X_k g)` over the horizontal frame.
    pub fn gamma_poly(&self, f: &Poly, g: &Poly) -> Poly {
        let mut out = Poly::zero(self.n);
        for x in &self.fields[..self.d] {
            out = &out + &(&x.apply_poly(f) * &x.apply_poly(g));
        }
        out
    }

    /// `Gamma^Z(f, g) = sum_m (Z_m f)(Z_m g)` over the vertical frame.
    pub fn gamma_z_poly(&self, f: &Poly, g: &Poly) -> Result<Poly> {
        self.require_step2()?;
        let mut out = Poly::zero(self.n);
        for z in &self.fields[self.d..] {
            out = &out + &(&z.apply_poly(f) * &z.apply_poly(g));
        }
        Ok(out)
    }

    fn field_on_jet(&self, k: usize, jet: &Jet2, x: &[f64]) -> f64 {
        self.fields[k]
            .coeffs
            .iter()
            .zip(&jet.grad)
            .map(|(c, g)| if c.is_zero() { 0.0 } else { c.eval(x) * g })
            .sum()
    }

    pub fn sub_laplacian_jet(&self, jet: &Jet2, x: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for j in 0..n {
            for l in 0..n {
                let a = &self.a[j * n + l];
                if !a.is_zero() {
                    s += a.eval(x) * jet.hess[j * n + l];
                }
            }
            if !self.b[j].is_zero() {
                s += self.b[j].eval(x) * jet.grad[j];
            }
        }
        s
    }

    pub fn gamma_jet(&self, jet: &Jet2, x: &[f64]) -> f64 {
        (0..self.d)
            .map(|k| self.field_on_jet(k, jet, x).powi(2))
            .sum()
    }

    pub fn gamma_z_jet(&self, jet: &Jet2, x: &[f64]) -> Result<f64> {
        self.require_step2()?;
        Ok((self.d..self.n)
            .map(|k| self.field_on_jet(k, jet, x).powi(2))
            .sum())
    }

    /// Horizontal gradient `(X_1 f, ..., X_d f)`.
    pub fn horizontal_gradient(&self, jet: &Jet2, x: &[f64]) -> Vec<f64> {
        (0..self.d).map(|k| self.field_on_jet(k, jet, x)).collect()
    }

    pub fn sub_laplacian_at(&self, f: &dyn SmoothFn, x: &[f64]) -> f64 {
        self.sub_laplacian_jet(&f.jet(x), x)
    }

    pub fn gamma_at(&self, f: &dyn SmoothFn, x: &[f64]) -> f64 {
        self.gamma_jet(&f.jet(x), x)
    }

    pub fn gamma_z_at(&self, f: &dyn SmoothFn, x: &[f64]) -> Result<f64> {
        self.gamma_z_jet(&f.jet(x), x)
    }
}
