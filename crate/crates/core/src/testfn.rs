//! Space-time test functions, their derivative audits, and weak-form
//! residuals of numerical solutions.
//!
//! Two families are provided. Product test functions multiply a temporal
//! ramp `tau(t / R^a)` with the smoothed spatial cut-off from
//! [`good_cutoff`](crate::semigroup::good_cutoff). Graded bumps compose a
//! profile `g` with the homogeneous space-time gauge
//! `s_R(t, x) = (t^P + |x|^P) / R^P`, `P = 2 r!`.

use rayon::prelude::*;
use serde::Serialize;

use crate::diffops::DiffOps;
use crate::error::{invalid, Error, Result};
use crate::grid::{det_sum, GridField, GridSpec, SubLaplacianStencil};
use crate::group::{CdParams, StratifiedAlgebra};
use crate::profiles::falloff;
use crate::quad::adaptive_simpson;
use crate::semigroup::{cutoff_ramp, good_cutoff, CutoffFunction, CutoffOptions};
use crate::solver::Trajectory;

/// Values below this are treated as outside the support in ratio audits.
pub const SUPPORT_FLOOR: f64 = 1e-12;

/// `g = eta^ell` with `ell = 2p/(p-1)` and `eta` a smoothstep falloff from
/// 1 at `s = 1/2` to 0 at `s = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct BumpProfile {
    pub p: f64,
    pub ell: f64,
    /// Measured `sup (|g'| + |g''|) / g^(1/p)`.
    pub c_g: f64,
    pub samples: usize,
}

impl BumpProfile {
    pub fn jet(&self, s: f64) -> [f64; 3] {
        let [e, e1, e2] = falloff(s, 0.5, 1.0);
        if e <= 0.0 {
            return [0.0, 0.0, 0.0];
        }
        let l = self.ell;
        let em2 = e.powf(l - 2.0);
        [
            em2 * e * e,
            l * em2 * e * e1,
            l * (l - 1.0) * em2 * e1 * e1 + l * em2 * e * e2,
        ]
    }

    pub fn value(&self, s: f64) -> f64 {
        self.jet(s)[0]
    }

    /// `(|g'| + |g''|) / g^(1/p)` at `s`, or 0 where `g` vanishes.
    pub fn domination_ratio(&self, s: f64) -> f64 {
        let [g, g1, g2] = self.jet(s);
        if g <= 0.0 {
            0.0
        } else {
            (g1.abs() + g2.abs()) / g.powf(1.0 / self.p)
        }
    }
}

/// Build the bump for exponent `p` and measure `C_g` on `samples` midpoints
/// of `(1/2, 1)`.
pub fn make_bump_with_samples(p: f64, samples: usize) -> Result<BumpProfile> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(invalid("p", format!("must exceed 1, got {p}")));
    }
    if samples == 0 {
        return Err(invalid("samples", "must be positive"));
    }
    let mut b = BumpProfile {
        p,
        ell: 2.0 * p / (p - 1.0),
        c_g: 0.0,
        samples,
    };
    let n = samples as f64;
    b.c_g = (0..samples)
        .map(|k| b.domination_ratio(0.5 + 0.5 * (k as f64 + 0.5) / n))
        .fold(0.0, f64::max);
    Ok(b)
}

pub fn make_bump(p: f64) -> Result<BumpProfile> {
    make_bump_with_samples(p, 20_000)
}

/// `s_R(t, x) = (|t|^P + |x|^P) / R^P` with `P = 2 r!`.
pub fn s_r_eval(alg: &StratifiedAlgebra, r: f64, t: f64, x: &[f64]) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid("R", "must be positive"));
    }
    if x.len() != alg.total_dim() {
        return Err(Error::DimensionMismatch {
            expected: alg.total_dim(),
            got: x.len(),
        });
    }
    let pw = alg.norm_power() as i32;
    let n = alg.hom_norm_slice(x);
    Ok((t.abs() / r).powi(pw) + (n / r).powi(pw))
}

/// Sampling for the graded audit, in units of `R`. The supremum is taken
/// over a grid covering `|x_j| <= extent^a_j` with spacing `h^a_j` and times
/// at multiples of `h` in `[0, 1)`. The analytic operator is cross-checked
/// at up to `check_points` annulus samples by second differences along the
/// flows of `X_k` and in time, with step `fd_step`.
#[derive(Clone, Debug, Serialize)]
pub struct AuditGrid {
    pub h: f64,
    pub extent: f64,
    pub fd_step: f64,
    pub check_points: usize,
}

impl Default for AuditGrid {
    fn default() -> Self {
        Self {
            h: 1.0 / 16.0,
            extent: 1.1,
            fd_step: 1.0 / 512.0,
            check_points: 20_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradedRow {
    pub r: f64,
    /// `sup |(d_tt + L) phi_R| R^2 / phi_R^(1/p)` over `D_R \ D_{R/2}`.
    pub k: f64,
    /// `sup |difference - analytic| / sup |analytic|` over the check points.
    pub discrete_error: f64,
    pub nodes: usize,
    pub h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradedAudit {
    pub p: f64,
    pub bump: BumpProfile,
    pub rows: Vec<GradedRow>,
    /// `max K / min K` over the radii.
    pub ratio: f64,
}

/// Audit `|(d_tt + L) g(s_R)| <= K R^-2 g(s_R)^(1/p)` on the annulus
/// `D_R \ D_{R/2}` for each radius.
///
/// The operator is evaluated from exact polynomial jets of the gauge. An
/// audit whose finite-difference cross-check differs by more than 10% of
/// the operator's size is rejected as under-resolved.
pub fn graded_wave_estimate_audit(
    alg: &StratifiedAlgebra,
    p: f64,
    r_list: &[f64],
    grid: &AuditGrid,
) -> Result<GradedAudit> {
    if r_list.len() < 2 {
        return Err(invalid("R_list", "need at least two radii"));
    }
    if r_list.iter().any(|&r| !(r > 0.0)) {
        return Err(invalid("R_list", "radii must be positive"));
    }
    if !(grid.h > 0.0 && grid.h <= 0.25) || grid.extent < 1.0 || !(grid.fd_step > 0.0) {
        return Err(invalid("grid", "need 0 < h <= 1/4, extent >= 1 and fd_step > 0"));
    }
    let bump = make_bump(p)?;
    let ops = DiffOps::new(alg);
    let gauge = alg.gauge_poly();
    let lq_poly = ops.sub_laplacian_poly(&gauge);
    let gq_poly = ops.gamma_poly(&gauge, &gauge);
    let pw = alg.norm_power() as i32;
    let pf = pw as f64;
    let lower = 0.5f64.powi(pw);
    let n = alg.total_dim();
    let d = alg.horizontal_dim();

    let mut rows = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let ext: Vec<f64> = alg.layers().iter().map(|&a| (grid.extent * r).powi(a as i32)).collect();
        let sp: Vec<f64> = alg.layers().iter().map(|&a| (grid.h * r).powi(a as i32)).collect();
        let spec = GridSpec::dirichlet(&ext, &sp)?;
        let rp = r.powi(pw);
        let ht = grid.h * r;
        let steps = (1.0 / grid.h).ceil() as usize;
        let times: Vec<f64> = (0..steps).map(|j| j as f64 * ht).filter(|&t| t < r).collect();

        // Exact operator at (t, x), or None outside the annulus.
        let exact = |t: f64, x: &[f64]| -> Option<(f64, f64)> {
            let s = (t.powi(pw) + gauge.eval(x)) / rp;
            if !(s < 1.0 && s >= lower) {
                return None;
            }
            let [g, g1, g2] = bump.jet(s);
            if g <= SUPPORT_FLOOR {
                return None;
            }
            let s_t = pf * t.powi(pw - 1) / rp;
            let s_tt = pf * (pf - 1.0) * t.powi(pw - 2) / rp;
            let op = g1 * (s_tt + lq_poly.eval(x) / rp)
                + g2 * (s_t * s_t + gq_poly.eval(x) / (rp * rp));
            Some((op, g))
        };
        let (k_max, op_max, nodes) = (0..spec.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |x, i| {
                    spec.node_coords(i, x);
                    let mut acc = (0.0f64, 0.0f64, 0usize);
                    for &t in &times {
                        if let Some((op, g)) = exact(t, x) {
                            acc.0 = acc.0.max(op.abs() * r * r / g.powf(1.0 / p));
                            acc.1 = acc.1.max(op.abs());
                            acc.2 += 1;
                        }
                    }
                    acc
                },
            )
            .reduce(
                || (0.0, 0.0, 0),
                |a, b| (a.0.max(b.0), a.1.max(b.1), a.2 + b.2),
            );
        if nodes == 0 {
            return Err(Error::UnderResolved(format!(
                "no sample in the annulus for R = {r}"
            )));
        }

        // Finite-difference cross-check at a strided subset of samples.
        let phi = |t: f64, x: &[f64]| bump.value((t.powi(pw) + gauge.eval(x)) / rp);
        let total = spec.len() * times.len();
        let stride = (total / grid.check_points.max(1)).max(1);
        let hs = grid.fd_step * r;
        let err_max = (0..total)
            .into_par_iter()
            .step_by(stride)
            .map_init(
                || vec![0.0; n],
                |x, idx| {
                    let (i, j) = (idx / times.len(), idx % times.len());
                    spec.node_coords(i, x);
                    let t = times[j];
                    let Some((op, _)) = exact(t, x) else { return 0.0 };
                    let c = phi(t, x);
                    let mut fd = (phi(t + hs, x) - 2.0 * c + phi(t - hs, x)) / (hs * hs);
                    let mut e = vec![0.0; n];
                    for k in 0..d {
                        e[k] = hs;
                        let fwd = phi(t, &alg.multiply_slices(x, &e));
                        e[k] = -hs;
                        let bwd = phi(t, &alg.multiply_slices(x, &e));
                        e[k] = 0.0;
                        fd += (fwd - 2.0 * c + bwd) / (hs * hs);
                    }
                    (fd - op).abs()
                },
            )
            .reduce(|| 0.0, f64::max);
        let rel = err_max / op_max;
        if rel > 0.1 {
            return Err(Error::UnderResolved(format!(
                "R = {r}: finite differences differ by {:.1}% of the operator's size",
                100.0 * rel
            )));
        }
        rows.push(GradedRow {
            r,
            k: k_max,
            discrete_error: rel,
            nodes,
            h: ht,
        });
    }
    let ratio = spread(rows.iter().map(|r| r.k));
    Ok(GradedAudit { p, bump, rows, ratio })
}

fn spread(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let hi = it.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = it.fold(f64::INFINITY, f64::min);
    hi / lo
}

/// Which equation a test function is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFnKind {
    Subelliptic,
    Parabolic,
    Hyperbolic,
    CarnotGraded,
}

impl TestFnKind {
    /// Exponent `a` of the temporal scale `R^a`.
    fn time_exponent(self) -> Option<i32> {
        match self {
            TestFnKind::Subelliptic => None,
            TestFnKind::Parabolic => Some(2),
            TestFnKind::Hyperbolic | TestFnKind::CarnotGraded => Some(1),
        }
    }
}

/// Jet in `t` of `tau(t / R^a)^alpha`, with `tau` equal to 1 on `[0, 1]`
/// and 0 from 2 on.
pub fn temporal_jet(t: f64, scale: f64, alpha: f64) -> [f64; 3] {
    let [v, d1, d2] = falloff(t / scale, 1.0, 2.0);
    if v <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    let (d1, d2) = (d1 / scale, d2 / (scale * scale));
    let vm2 = v.powf(alpha - 2.0);
    [
        vm2 * v * v,
        alpha * vm2 * v * d1,
        alpha * (alpha - 1.0) * vm2 * d1 * d1 + alpha * vm2 * v * d2,
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductRow {
    pub r: f64,
    /// `sup |L(phi_R^alpha)| R^2 / phi_R^(alpha-2)`.
    pub spatial_const: f64,
    /// Parabolic: `sup |d_t(tau^alpha)| R^2 / tau^(alpha-1)`.
    /// Hyperbolic: `sup |d_tt(tau^alpha)| R^2 / tau^(alpha-2)`.
    pub temporal_const: f64,
    /// Hyperbolic only: `sup |d_t(tau^alpha)| R / tau^(alpha-1)`.
    pub temporal_first_const: Option<f64>,
    /// Spatial derivatives vanish outside `R < |x| <= gamma R` and
    /// temporal ones outside `[R^a, 2 R^a]`.
    pub support_ok: bool,
    pub gamma_factor: f64,
    pub h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductAudit {
    pub kind: TestFnKind,
    pub p: f64,
    pub alpha: f64,
    pub rows: Vec<ProductRow>,
    pub spatial_ratio: f64,
    pub temporal_ratio: f64,
}

/// Audit the product test function `(tau(t/R^a) phi_R(x))^alpha` for each
/// radius, building `phi_R` on `base` dilated by `R`.
pub fn product_testfn_audit(
    alg: &StratifiedAlgebra,
    kind: TestFnKind,
    p: f64,
    r_list: &[f64],
    base: &GridSpec,
    cd: &CdParams,
    opts: &CutoffOptions,
) -> Result<ProductAudit> {
    let a = match kind {
        TestFnKind::Parabolic => 2,
        TestFnKind::Hyperbolic => 1,
        _ => return Err(invalid("kind", "product audit covers parabolic and hyperbolic")),
    };
    if !(p > 1.0) {
        return Err(invalid("p", "must exceed 1"));
    }
    if r_list.len() < 2 || r_list.iter().any(|&r| !(r > 0.0)) {
        return Err(invalid("R_list", "need at least two positive radii"));
    }
    let alpha = 2.0 * p / (p - 1.0);
    let mut rows = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let spec = base.dilated(alg.layers(), r)?;
        let st = SubLaplacianStencil::new(alg, &spec)?;
        let cut = good_cutoff(alg, &st, cd, r, opts)?;
        let (spatial_const, spatial_support) = spatial_product_constant(alg, &st, &cut, alpha)?;

        let scale = r.powi(a);
        let n = 20_000;
        let mut c2 = 0.0f64;
        let mut c1 = 0.0f64;
        let mut temporal_support = true;
        for k in 0..n {
            let t = 2.0 * scale * (k as f64 + 0.5) / n as f64;
            let [v, d1, d2] = temporal_jet(t, scale, alpha);
            let base_v = v.powf(1.0 / alpha);
            if base_v <= SUPPORT_FLOOR {
                continue;
            }
            if (d1 != 0.0 || d2 != 0.0) && !(t >= scale && t <= 2.0 * scale) {
                temporal_support = false;
            }
            c1 = c1.max(d1.abs() * r.powi(a) / base_v.powf(alpha - 1.0));
            c2 = c2.max(d2.abs() * r * r / base_v.powf(alpha - 2.0));
        }
        let (temporal_const, temporal_first_const) = match kind {
            TestFnKind::Parabolic => (c1, None),
            _ => (c2, Some(c1)),
        };
        rows.push(ProductRow {
            r,
            spatial_const,
            temporal_const,
            temporal_first_const,
            support_ok: spatial_support && temporal_support,
            gamma_factor: cut.gamma_factor,
            h: st.h_min(),
        });
    }
    Ok(ProductAudit {
        kind,
        p,
        alpha,
        spatial_ratio: spread(rows.iter().map(|r| r.spatial_const)),
        temporal_ratio: spread(rows.iter().map(|r| r.temporal_const)),
        rows,
    })
}

/// `sup |alpha phi L phi + alpha (alpha - 1) Gamma(phi)| R^2`, which is
/// `|L(phi^alpha)| R^2 / phi^(alpha-2)`, with `L phi` and `Gamma(phi)` from
/// the chain rule through the ramp. Also reports whether every node with a
/// nonzero value lies in the annulus `R < |x| <= gamma R`.
fn spatial_product_constant(
    alg: &StratifiedAlgebra,
    st: &SubLaplacianStencil,
    cut: &CutoffFunction,
    alpha: f64,
) -> Result<(f64, bool)> {
    let spec = st.spec();
    let psi = &cut.evolved;
    let lpsi = st.apply(psi)?;
    let gpsi = st.gamma(psi)?;
    let r = cut.r;
    let outer = cut.gamma_factor * r * (1.0 + 1e-12);
    let res: Vec<(f64, bool)> = (0..spec.len())
        .into_par_iter()
        .filter(|&i| st.is_valid(i))
        .map_init(
            || vec![0.0; spec.ndim()],
            |x, i| {
                let [phi, d1, d2] = cutoff_ramp(psi.values[i]);
                if phi <= SUPPORT_FLOOR {
                    return (0.0, true);
                }
                let lphi = d1 * lpsi.values[i] + d2 * gpsi.values[i];
                let gphi = d1 * d1 * gpsi.values[i];
                let v = (alpha * phi * lphi + alpha * (alpha - 1.0) * gphi).abs() * r * r;
                if v == 0.0 {
                    return (0.0, true);
                }
                spec.node_coords(i, x);
                let n = alg.hom_norm_slice(x);
                (v, n > r && n <= outer)
            },
        )
        .collect();
    let c = res.iter().map(|v| v.0).fold(0.0, f64::max);
    Ok((c, res.iter().all(|v| v.1)))
}

/// Result of one evaluation of the logarithmic integral inequality.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Lemma64 {
    pub a: f64,
    pub h: f64,
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub margin: f64,
}

/// Compare `int_0^R g*(A / rho^h) drho / rho` with `(ln 2 / h) g(A / R^h)`,
/// where `g` is decreasing, vanishes from 1 on, and `g*` is `g` cut to
/// `[1/2, inf)`.
///
/// The integral is taken in `u = ln rho`, over the interval where
/// `1/2 <= A e^(-h u) < 1`.
pub fn lemma_6_4_check(g: impl Fn(f64) -> f64, a: f64, h: f64, r: f64, tol: f64) -> Result<Lemma64> {
    for (name, v) in [("A", a), ("h", h), ("R", r)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid(name, "must be positive and finite"));
        }
    }
    let lo = a.ln() / h;
    let hi = ((2.0 * a).ln() / h).min(r.ln());
    let lhs = if hi > lo {
        adaptive_simpson(|u| g(a * (-h * u).exp()), lo, hi, tol)?
    } else {
        0.0
    };
    let rhs = std::f64::consts::LN_2 / h * g(a / r.powf(h));
    Ok(Lemma64 {
        a,
        h,
        r,
        lhs,
        rhs,
        margin: rhs - lhs,
    })
}

/// The inequality on a 10 x 10 x 10 log-spaced grid of `(A, h, R)` with
/// `A` in `[1e-2, 1e2]`, `h` in `[0.25, 8]`, `R` in `[0.1, 10]`.
pub fn lemma_6_4_sweep(g: impl Fn(f64) -> f64 + Copy) -> Result<Vec<Lemma64>> {
    let logspace = |lo: f64, hi: f64, k: usize| -> f64 {
        (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / 9.0).exp()
    };
    let mut out = Vec::with_capacity(1000);
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..10 {
                out.push(lemma_6_4_check(
                    g,
                    logspace(1e-2, 1e2, i),
                    logspace(0.25, 8.0, j),
                    logspace(0.1, 10.0, k),
                    1e-12,
                )?);
            }
        }
    }
    Ok(out)
}

/// A concrete space-time test function sampled on a grid.
#[derive(Clone, Debug)]
pub struct SpaceTimeTestFn {
    pub kind: TestFnKind,
    pub r: f64,
    pub alpha: f64,
    shape: Shape,
}

#[derive(Clone, Debug)]
enum Shape {
    /// `tau(t/R^a)^alpha * phi_R(x)^alpha`.
    Product { spatial: GridField },
    /// `g(s_R(t, x))`, stored through the gauge `|x|^P` on the grid.
    Graded {
        bump: BumpProfile,
        gauge: Vec<f64>,
        power: i32,
    },
}

/// One time slice of a test function.
pub struct TestSlice {
    pub phi: Vec<f64>,
    pub phi_t: Vec<f64>,
    pub phi_tt: Vec<f64>,
    pub lphi: Vec<f64>,
}

impl SpaceTimeTestFn {
    /// Product test function with the spatial factor `cut.field^alpha`.
    pub fn product(kind: TestFnKind, cut: &CutoffFunction, p: f64) -> Result<Self> {
        if kind == TestFnKind::CarnotGraded {
            return Err(invalid("kind", "use SpaceTimeTestFn::graded"));
        }
        if !(p > 1.0) {
            return Err(invalid("p", "must exceed 1"));
        }
        let alpha = 2.0 * p / (p - 1.0);
        Ok(Self {
            kind,
            r: cut.r,
            alpha,
            shape: Shape::Product {
                spatial: cut.field.map(|v| v.max(0.0).powf(alpha)),
            },
        })
    }

    /// Graded bump `g(s_R)` on the nodes of `spec`.
    pub fn graded(alg: &StratifiedAlgebra, spec: &GridSpec, bump: &BumpProfile, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(invalid("R", "must be positive"));
        }
        let gauge_poly = alg.gauge_poly();
        let gauge = GridField::from_fn(spec, |x| gauge_poly.eval(x)).values;
        Ok(Self {
            kind: TestFnKind::CarnotGraded,
            r,
            alpha: bump.ell,
            shape: Shape::Graded {
                bump: bump.clone(),
                gauge,
                power: alg.norm_power() as i32,
            },
        })
    }

    /// End of the time support, `2 R^a` for products and `R` for graded bumps.
    pub fn time_support_end(&self) -> Option<f64> {
        match (&self.shape, self.kind.time_exponent()) {
            (_, None) => None,
            (Shape::Graded { .. }, _) => Some(self.r),
            (Shape::Product { .. }, Some(a)) => Some(2.0 * self.r.powi(a)),
        }
    }

    pub fn slice(&self, stencil: &SubLaplacianStencil, t: f64) -> Result<TestSlice> {
        match &self.shape {
            Shape::Product { spatial } => {
                let [v, d1, d2] = match self.kind.time_exponent() {
                    None => [1.0, 0.0, 0.0],
                    Some(a) => temporal_jet(t, self.r.powi(a), self.alpha),
                };
                let l = stencil.apply(spatial)?;
                let sc = |s: f64| spatial.values.iter().map(|x| s * x).collect::<Vec<_>>();
                Ok(TestSlice {
                    phi: sc(v),
                    phi_t: sc(d1),
                    phi_tt: sc(d2),
                    lphi: l.values.iter().map(|x| v * x).collect(),
                })
            }
            Shape::Graded { bump, gauge, power } => {
                let rp = self.r.powi(*power);
                let pf = *power as f64;
                let tp = t.abs().powi(*power);
                let s_t = pf * t.powi(power - 1) / rp;
                let s_tt = pf * (pf - 1.0) * t.powi(power - 2) / rp;
                let jets: Vec<[f64; 3]> = gauge.par_iter().map(|&q| bump.jet((tp + q) / rp)).collect();
                let phi: Vec<f64> = jets.iter().map(|j| j[0]).collect();
                let mut lphi = vec![0.0; phi.len()];
                stencil.apply_into(&phi, &mut lphi)?;
                Ok(TestSlice {
                    phi_t: jets.iter().map(|j| j[1] * s_t).collect(),
                    phi_tt: jets.iter().map(|j| j[2] * s_t * s_t + j[1] * s_tt).collect(),
                    phi,
                    lphi,
                })
            }
        }
    }
}

/// Components of a weak-form residual; `residual` is their sum.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeakResidual {
    /// `int int |u|^p phi`.
    pub nonlinear: f64,
    /// Initial-data terms.
    pub data: f64,
    /// The term pairing `u` with the linear operator applied to `phi`.
    pub linear: f64,
    pub residual: f64,
    /// Sum of absolute values of the components.
    pub scale: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    det_sum(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>())
}

/// Weak-form residual of a trajectory against a test function.
///
/// * subelliptic: `int |u|^p phi + int u L phi` using the first snapshot;
/// * parabolic: `int int |u|^p phi + int u0 phi(0) + int int u (phi_t + L phi)`;
/// * hyperbolic and graded: `int int |u|^p phi + int u1 phi(0)
///   - int u0 phi_t(0) - int int u (phi_tt - L phi)`.
///
/// A solution of the equation gives a residual of zero up to quadrature
/// error; a solution of the inequality gives a residual of at most zero.
/// Time integrals use the trapezoid rule over the snapshots.
pub fn weak_form_residual(
    stencil: &SubLaplacianStencil,
    traj: &Trajectory,
    testfn: &SpaceTimeTestFn,
    p: f64,
    u1: Option<&GridField>,
) -> Result<WeakResidual> {
    let n = stencil.spec().len();
    if traj.times.is_empty() || traj.times.len() != traj.values.len() {
        return Err(Error::Malformed("trajectory needs matching, non-empty times and values".into()));
    }
    if traj.values.iter().any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: traj.values.iter().map(|v| v.len()).find(|&l| l != n).unwrap_or(0),
        });
    }
    let dv = stencil.spec().cell_volume();
    let powp = |u: &[f64]| u.iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>();

    if testfn.kind == TestFnKind::Subelliptic {
        let u = &traj.values[0];
        let s = testfn.slice(stencil, 0.0)?;
        let nonlinear = dot(&powp(u), &s.phi) * dv;
        let linear = dot(u, &s.lphi) * dv;
        return Ok(finish(nonlinear, 0.0, linear));
    }

    if traj.times[0] != 0.0 {
        return Err(Error::IncompatibleSupport("trajectory must start at t = 0".into()));
    }
    let t_end = *traj.times.last().expect("non-empty");
    let support = testfn.time_support_end().expect("time-dependent kind");
    if support > t_end {
        return Err(Error::IncompatibleSupport(format!(
            "test function is supported up to t = {support}, trajectory ends at {t_end}"
        )));
    }

    let hyperbolic = matches!(testfn.kind, TestFnKind::Hyperbolic | TestFnKind::CarnotGraded);
    let mut integrand = Vec::with_capacity(traj.times.len());
    let mut data = 0.0;
    for (k, (&t, u)) in traj.times.iter().zip(&traj.values).enumerate() {
        if t > support {
            integrand.push((0.0, 0.0));
            continue;
        }
        let s = testfn.slice(stencil, t)?;
        let nl = dot(&powp(u), &s.phi) * dv;
        let lin = if hyperbolic {
            let op: Vec<f64> = s.phi_tt.iter().zip(&s.lphi).map(|(a, b)| a - b).collect();
            -dot(u, &op) * dv
        } else {
            let op: Vec<f64> = s.phi_t.iter().zip(&s.lphi).map(|(a, b)| a + b).collect();
            dot(u, &op) * dv
        };
        integrand.push((nl, lin));
        if k == 0 {
            if hyperbolic {
                let u1 = u1.ok_or_else(|| invalid("u1", "hyperbolic residual needs the initial velocity"))?;
                if u1.values.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: u1.values.len(),
                    });
                }
                data = (dot(&u1.values, &s.phi) - dot(u, &s.phi_t)) * dv;
            } else {
                data = dot(u, &s.phi) * dv;
            }
        }
    }
    let (mut nonlinear, mut linear) = (0.0, 0.0);
    for k in 1..traj.times.len() {
        let w = 0.5 * (traj.times[k] - traj.times[k - 1]);
        nonlinear += w * (integrand[k].0 + integrand[k - 1].0);
        linear += w * (integrand[k].1 + integrand[k - 1].1);
    }
    Ok(finish(nonlinear, data, linear))
}

fn finish(nonlinear: f64, data: f64, linear: f64) -> WeakResidual {
    WeakResidual {
        nonlinear,
        data,
        linear,
        residual: nonlinear + data + linear,
        scale: nonlinear.abs() + data.abs() + linear.abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_shape() {
        let b = make_bump(2.0).unwrap();
        assert_eq!(b.ell, 4.0);
        assert_eq!(b.value(0.0), 1.0);
        assert_eq!(b.value(0.5), 1.0);
        assert_eq!(b.value(1.0), 0.0);
        assert!(b.c_g.is_finite() && b.c_g > 0.0);
        let mut last = 1.0;
        for k in 1..100 {
            let v = b.value(0.5 + 0.005 * k as f64);
            assert!(v <= last);
            last = v;
        }
        let fine = make_bump_with_samples(2.0, 40_000).unwrap();
        assert!((fine.c_g / b.c_g - 1.0).abs() < 0.05);
        assert!(make_bump(1.0).is_err());
    }

    #[test]
    fn s_r_values() {
        let alg = StratifiedAlgebra::heisenberg(1).unwrap();
        assert_eq!(s_r_eval(&alg, 1.0, 0.0, &[0.0; 3]).unwrap(), 0.0);
        assert!((s_r_eval(&alg, 1.0, 1.0, &[0.0; 3]).unwrap() - 1.0).abs() < 1e-15);
        assert!(s_r_eval(&alg, 0.0, 1.0, &[0.0; 3]).is_err());
    }

    #[test]
    fn lemma_trivial_and_example() {
        let b = make_bump(2.0).unwrap();
        let g = |s: f64| b.value(s);
        let empty = lemma_6_4_check(g, 4.0, 1.0, 2.0, 1e-12).unwrap();
        assert_eq!(empty.lhs, 0.0);
        let ex = lemma_6_4_check(g, 1.0, 4.0, 2.0, 1e-10).unwrap();
        assert!(ex.lhs > 0.0 && ex.margin >= 0.0, "{ex:?}");
    }

    #[test]
    fn temporal_jet_matches_differences() {
        let (scale, alpha) = (3.0, 6.0);
        let h = 1e-5;
        for &t in &[3.5, 4.2, 5.7] {
            let j = temporal_jet(t, scale, alpha);
            let d1 = (temporal_jet(t + h, scale, alpha)[0] - temporal_jet(t - h, scale, alpha)[0]) / (2.0 * h);
            let d2 = (temporal_jet(t + h, scale, alpha)[1] - temporal_jet(t - h, scale, alpha)[1]) / (2.0 * h);
            assert!((j[1] - d1).abs() < 1e-7);
            assert!((j[2] - d2).abs() < 1e-6);
        }
    }
}
