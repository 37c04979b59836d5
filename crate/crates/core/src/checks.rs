//! Verification suites shared by the command-line tool and the test suite.
//!
//! Each suite returns the measured quantities; pass/fail thresholds are
//! applied by the caller.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffops::ProfileOfPoly;
use crate::error::{invalid, Result};
use crate::grid::{fd_convergence_report, symmetry_residual, FdRow, GridField, GridSpec, SubLaplacianStencil};
use crate::group::{CdParams, GroupPoint, StratifiedAlgebra};
use crate::semigroup::{good_cutoff, verify_semigroup_gradient_bound, CutoffFunction, CutoffOptions, GradientBoundReport};
use crate::testfn::{
    graded_wave_estimate_audit, lemma_6_4_sweep, make_bump, product_testfn_audit, AuditGrid, GradedAudit, Lemma64,
    ProductAudit, TestFnKind,
};
use crate::solver::{
    fit_lifespan_exponent, hyperbolic_ode_blowup_time, parabolic_ode_blowup_time, solve, Kind, LifespanFit,
    LifespanRecord, ProblemSpec, SolverOptions,
};

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = sup_norm(a).max(sup_norm(b));
    if s == 0.0 {
        sup_norm(&d)
    } else {
        sup_norm(&d) / s
    }
}

/// Largest relative errors of the group axioms over random points.
#[derive(Clone, Debug, Serialize)]
pub struct AlgebraSuite {
    pub algebra: String,
    pub cases: usize,
    pub associativity: f64,
    pub inverse: f64,
    pub dilation: f64,
    pub homogeneity: f64,
}

impl AlgebraSuite {
    pub fn worst(&self) -> f64 {
        self.associativity.max(self.inverse).max(self.dilation).max(self.homogeneity)
    }
}

/// Check `(xy)z = x(yz)`, `x x^-1 = 0`, `delta(xy) = delta(x) delta(y)` and
/// `|delta x| = lambda |x|` on `cases` random points with coordinates in
/// `[-2, 2]` and `lambda` in `[e^-3, e^3]`.
pub fn algebra_suite(alg: &StratifiedAlgebra, cases: usize, seed: u64) -> Result<AlgebraSuite> {
    let n = alg.total_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| {
        GroupPoint::new((0..n).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect())
    };
    let mut out = AlgebraSuite {
        algebra: alg.name().to_string(),
        cases,
        associativity: 0.0,
        inverse: 0.0,
        dilation: 0.0,
        homogeneity: 0.0,
    };
    for _ in 0..cases {
        let (x, y, z) = (point(&mut rng), point(&mut rng), point(&mut rng));
        let lambda = (6.0 * rng.random::<f64>() - 3.0).exp();
        let xy = alg.multiply(&x, &y)?;
        let left = alg.multiply(&xy, &z)?;
        let right = alg.multiply(&x, &alg.multiply(&y, &z)?)?;
        out.associativity = out.associativity.max(rel_diff(&left.coords, &right.coords));

        let xi = alg.inverse(&x);
        let e1 = alg.multiply(&x, &xi)?;
        let e2 = alg.multiply(&xi, &x)?;
        out.inverse = out.inverse.max((sup_norm(&e1.coords).max(sup_norm(&e2.coords))) / sup_norm(&x.coords));

        let d_xy = alg.dilate(lambda, &xy)?;
        let dd = alg.multiply(&alg.dilate(lambda, &x)?, &alg.dilate(lambda, &y)?)?;
        out.dilation = out.dilation.max(rel_diff(&d_xy.coords, &dd.coords));

        let nx = alg.hom_norm(&x);
        let ndx = alg.hom_norm(&alg.dilate(lambda, &x)?);
        out.homogeneity = out.homogeneity.max((ndx - lambda * nx).abs() / (lambda * nx));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct HaarCheck {
    pub algebra: String,
    pub r: f64,
    pub samples: u64,
    pub ratio: f64,
    pub expected: f64,
    pub stderr: f64,
    /// `|ratio - expected| / stderr`.
    pub z: f64,
}

/// `vol(B_2R) / vol(B_R)` by Monte Carlo against `2^Q`.
pub fn haar_scaling(alg: &StratifiedAlgebra, r: f64, samples: u64, seed: u64) -> Result<HaarCheck> {
    let (v1, s1) = alg.ball_volume_mc(r, samples, seed)?;
    let (v2, s2) = alg.ball_volume_mc(2.0 * r, samples, seed.wrapping_add(1))?;
    let ratio = v2 / v1;
    let stderr = ratio * ((s1 / v1).powi(2) + (s2 / v2).powi(2)).sqrt();
    let expected = 2f64.powi(alg.hom_dim() as i32);
    Ok(HaarCheck {
        algebra: alg.name().to_string(),
        r,
        samples,
        ratio,
        expected,
        stderr,
        z: (ratio - expected).abs() / stderr,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CdCheck {
    pub params: CdParams,
    pub sweep_rho2: f64,
    pub sweep_kappa: f64,
    /// Largest difference between the eigenvalue and sweep values.
    pub max_diff: f64,
}

pub fn cd_check(alg: &StratifiedAlgebra, samples: usize, seed: u64) -> Result<CdCheck> {
    let params = alg.cd_parameters()?;
    let (rho2, kappa) = alg.cd_parameters_sweep(samples, seed)?;
    Ok(CdCheck {
        params,
        sweep_rho2: rho2,
        sweep_kappa: kappa,
        max_diff: (params.rho2 - rho2).abs().max((params.kappa - kappa).abs()),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscretizationCheck {
    pub rows: Vec<FdRow>,
    /// Error ratio between the two finest grids.
    pub ratio: f64,
    pub symmetry: f64,
}

fn layered_grid(alg: &StratifiedAlgebra, ext: f64, h: f64) -> Result<GridSpec> {
    let e: Vec<f64> = alg.layers().iter().map(|_| ext).collect();
    let s: Vec<f64> = alg.layers().iter().map(|&a| h.powi(a as i32)).collect();
    GridSpec::dirichlet(&e, &s)
}

/// Convergence of the stencil on `exp(-|x|^P)` for `h = 0.1, 0.05`, and the
/// symmetry residual for two off-center bumps.
pub fn discretization_check(alg: &StratifiedAlgebra) -> Result<DiscretizationCheck> {
    let gauge = alg.gauge_poly();
    let f = ProfileOfPoly::new(&gauge, |q| {
        let e = (-q).exp();
        [e, -e, e]
    });
    let specs = [layered_grid(alg, 2.0, 0.1)?, layered_grid(alg, 2.0, 0.05)?];
    let probe = vec![1.0; alg.total_dim()];
    let rows = fd_convergence_report(alg, &f, &specs, &probe)?;
    let ratio = rows.last().and_then(|r| r.ratio).unwrap_or(f64::NAN);

    let spec = layered_grid(alg, 1.5, 0.125)?;
    let st = SubLaplacianStencil::new(alg, &spec)?;
    let bump = |shift: f64| {
        move |x: &[f64]| {
            let r2: f64 = x.iter().enumerate().map(|(i, v)| (v - shift * (1.0 + i as f64 * 0.3)).powi(2)).sum();
            (1.0 - r2 / 0.36).max(0.0).powi(4)
        }
    };
    let f1 = GridField::from_fn(&spec, bump(0.1));
    let f2 = GridField::from_fn(&spec, bump(-0.12));
    let symmetry = symmetry_residual(&st, &f1, &f2)?;
    Ok(DiscretizationCheck { rows, ratio, symmetry })
}

#[derive(Clone, Debug, Serialize)]
pub struct CutoffCheck {
    pub cutoffs: Vec<CutoffFunction>,
    /// `(max - min) / min` of the Laplacian constant over the radii.
    pub lap_variation: f64,
    /// `(max - min) / min` of the gradient constant over the radii.
    pub grad_variation: f64,
}

/// Grid for the cut-off at radius `R`: the dilation by `R` of a graded
/// reference grid with the given half-widths and spacing.
pub fn cutoff_grid(alg: &StratifiedAlgebra, horizontal: f64, vertical: f64, h: f64, r: f64) -> Result<GridSpec> {
    GridSpec::graded(alg, horizontal, vertical, h)?.dilated(alg.layers(), r)
}

pub fn cutoff_check(
    alg: &StratifiedAlgebra,
    radii: &[f64],
    base: (f64, f64, f64),
    opts: &CutoffOptions,
) -> Result<CutoffCheck> {
    if radii.is_empty() {
        return Err(invalid("radii", "empty list"));
    }
    let cd = alg.cd_parameters()?;
    let mut cutoffs = Vec::with_capacity(radii.len());
    for &r in radii {
        let spec = cutoff_grid(alg, base.0, base.1, base.2, r)?;
        let st = SubLaplacianStencil::new(alg, &spec)?;
        cutoffs.push(good_cutoff(alg, &st, &cd, r, opts)?);
    }
    let var = |f: &dyn Fn(&CutoffFunction) -> f64| {
        let hi = cutoffs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let lo = cutoffs.iter().map(f).fold(f64::INFINITY, f64::min);
        (hi - lo) / lo
    };
    let lap_variation = var(&|c| c.lap_const);
    let grad_variation = var(&|c| c.grad_const);
    Ok(CutoffCheck {
        cutoffs,
        lap_variation,
        grad_variation,
    })
}

/// The semigroup gradient bound for the bump `exp(-(|x|/w)^4)` on periodic
/// boxes `[1, 1, 1/2]` (horizontal spacing `1/n`, vertical `1/(4 n^2)`),
/// at `t = 0.1`, `nu = 1`, `w = 0.15`, for each `n`.
pub fn gradient_bound_check(alg: &StratifiedAlgebra, resolutions: &[usize]) -> Result<Vec<GradientBoundReport>> {
    if alg.name() != "heisenberg-1" {
        return Err(invalid("algebra", "the periodic gradient-bound check is set up for heisenberg-1"));
    }
    let cd = alg.cd_parameters()?;
    let w: f64 = 0.15;
    resolutions
        .iter()
        .map(|&n| {
            let spec = GridSpec::periodic(&[1.0, 1.0, 0.5], &[n, n, n * n / 2])?;
            let st = SubLaplacianStencil::new(alg, &spec)?;
            let f = GridField::from_fn(&spec, |x| (-(alg.hom_norm_slice(x) / w).powi(4)).exp());
            verify_semigroup_gradient_bound(&st, &cd, &f, 0.1, 1.0)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TestFnCheck {
    pub graded: Vec<GradedAudit>,
    pub products: Vec<ProductAudit>,
    /// Per exponent, the inequality checks on the `(A, h, R)` sweep.
    pub lemma: Vec<(f64, Vec<Lemma64>)>,
    pub lemma_min_margin: f64,
}

/// Graded wave-estimate audits, parabolic and hyperbolic product audits and
/// the integral inequality sweep, for every exponent in `ps`.
pub fn testfn_check(
    alg: &StratifiedAlgebra,
    ps: &[f64],
    radii: &[f64],
    base: (f64, f64, f64),
    audit_grid: &AuditGrid,
    opts: &CutoffOptions,
) -> Result<TestFnCheck> {
    let cd = alg.cd_parameters()?;
    let base_spec = GridSpec::graded(alg, base.0, base.1, base.2)?;
    let mut out = TestFnCheck {
        graded: Vec::new(),
        products: Vec::new(),
        lemma: Vec::new(),
        lemma_min_margin: f64::INFINITY,
    };
    for &p in ps {
        out.graded.push(graded_wave_estimate_audit(alg, p, radii, audit_grid)?);
        for kind in [TestFnKind::Parabolic, TestFnKind::Hyperbolic] {
            out.products
                .push(product_testfn_audit(alg, kind, p, radii, &base_spec, &cd, opts)?);
        }
        let bump = make_bump(p)?;
        let rows = lemma_6_4_sweep(|s| bump.value(s))?;
        let m = rows.iter().map(|l| l.margin).fold(f64::INFINITY, f64::min);
        out.lemma_min_margin = out.lemma_min_margin.min(m);
        out.lemma.push((p, rows));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct OdeCheck {
    pub kind: Kind,
    pub p: f64,
    pub amplitude: f64,
    pub measured: f64,
    pub oracle: f64,
    pub rel_error: f64,
}

/// Uniform data on a small periodic Heisenberg box, where the diffusion
/// term vanishes and the PDE reduces to an ODE.
pub fn ode_check(kind: Kind, p: f64, amplitude: f64) -> Result<OdeCheck> {
    let alg = StratifiedAlgebra::heisenberg(1)?;
    let spec = GridSpec::periodic(&[1.0, 1.0, 0.5], &[8, 8, 16])?;
    let one = GridField::from_fn(&spec, |_| 1.0);
    let (u0, u1, oracle) = match kind {
        Kind::Parabolic => (one, None, parabolic_ode_blowup_time(amplitude, p)),
        Kind::Hyperbolic => (
            GridField::zeros(&spec),
            Some(one),
            hyperbolic_ode_blowup_time(amplitude, p)?,
        ),
    };
    let pb = ProblemSpec {
        kind,
        p,
        u0,
        u1,
        amplitude,
        horizon: 1e3 * oracle,
        options: SolverOptions::default(),
    };
    let rec = solve(&alg, &pb)?;
    Ok(OdeCheck {
        kind,
        p,
        amplitude,
        measured: rec.t_measured,
        oracle,
        rel_error: (rec.t_measured / oracle - 1.0).abs(),
    })
}

/// Grid and data for a lifespan sweep. The reference grid has half-widths
/// `horizontal`, `vertical` and spacing `h`; the datum is
/// `exp(-|x|^4)`, set to zero in the sponge layer.
///
/// When read from a configuration, missing keys take the defaults of
/// [`SweepSetup::parabolic`] or [`SweepSetup::hyperbolic`] according to
/// `kind`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "PartialSweepSetup")]
pub struct SweepSetup {
    pub kind: Kind,
    pub p: f64,
    pub amplitudes: Vec<f64>,
    pub h: f64,
    pub horizontal: f64,
    pub vertical: f64,
    pub regrid: bool,
    pub horizon: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialSweepSetup {
    kind: Kind,
    p: Option<f64>,
    amplitudes: Option<Vec<f64>>,
    h: Option<f64>,
    horizontal: Option<f64>,
    vertical: Option<f64>,
    regrid: Option<bool>,
    horizon: Option<f64>,
}

impl From<PartialSweepSetup> for SweepSetup {
    fn from(s: PartialSweepSetup) -> Self {
        let d = match s.kind {
            Kind::Parabolic => Self::parabolic(),
            Kind::Hyperbolic => Self::hyperbolic(),
        };
        Self {
            kind: s.kind,
            p: s.p.unwrap_or(d.p),
            amplitudes: s.amplitudes.unwrap_or(d.amplitudes),
            h: s.h.unwrap_or(d.h),
            horizontal: s.horizontal.unwrap_or(d.horizontal),
            vertical: s.vertical.unwrap_or(d.vertical),
            regrid: s.regrid.unwrap_or(d.regrid),
            horizon: s.horizon.unwrap_or(d.horizon),
        }
    }
}

fn logspace(hi: f64, decades: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| hi * 10f64.powf(-decades * k as f64 / (n - 1) as f64))
        .collect()
}

impl SweepSetup {
    /// `p = 1.3`, six amplitudes from `10^-0.5` down 1.5 decades.
    pub fn parabolic() -> Self {
        Self {
            kind: Kind::Parabolic,
            p: 1.3,
            amplitudes: logspace(10f64.powf(-0.5), 1.5, 6),
            h: 0.25,
            horizontal: 6.5,
            vertical: 4.0,
            regrid: true,
            horizon: 1e5,
        }
    }

    /// `p = 1.4`, five amplitudes from `10^-0.5` down 1.5 decades.
    pub fn hyperbolic() -> Self {
        Self {
            kind: Kind::Hyperbolic,
            p: 1.4,
            amplitudes: logspace(10f64.powf(-0.5), 1.5, 5),
            h: 0.25,
            horizontal: 6.0,
            vertical: 6.0,
            regrid: true,
            horizon: 1e5,
        }
    }

    /// The problem template, with amplitude set to the first entry.
    pub fn problem(&self, alg: &StratifiedAlgebra) -> Result<ProblemSpec> {
        let spec = GridSpec::graded(alg, self.horizontal, self.vertical, self.h)?;
        let bump = GridField::from_fn(&spec, |x| (-alg.hom_norm_slice(x).powi(4)).exp());
        let values = (0..spec.len())
            .map(|i| if spec.in_sponge(i) { 0.0 } else { bump.values[i] })
            .collect();
        let bump = GridField::from_values(&spec, values)?;
        let (u0, u1) = match self.kind {
            Kind::Parabolic => (bump, None),
            Kind::Hyperbolic => (GridField::zeros(&spec), Some(bump)),
        };
        Ok(ProblemSpec {
            kind: self.kind,
            p: self.p,
            u0,
            u1,
            amplitude: self.amplitudes.first().copied().unwrap_or(1.0),
            horizon: self.horizon,
            options: SolverOptions {
                regrid: self.regrid,
                ..SolverOptions::default()
            },
        })
    }
}

/// Slope and domination checks of a lifespan sweep against a target slope.
#[derive(Clone, Debug, Serialize)]
pub struct LifespanCheck {
    pub fit: LifespanFit,
    pub target: f64,
    /// `|slope - target| <= 0.2 |target|`.
    pub slope_ok: bool,
    /// `max T a^-target` over the two largest usable amplitudes.
    pub c_fit: f64,
    /// Every usable point satisfies `T <= c_fit a^target`.
    pub dominated: bool,
}

pub fn lifespan_check(records: &[LifespanRecord], q: f64, big_d: f64, target: f64) -> Result<LifespanCheck> {
    let first = records.first().ok_or_else(|| invalid("records", "empty sweep"))?;
    let fit = fit_lifespan_exponent(records, first.kind, first.p, q, big_d)?;
    let mut usable: Vec<&LifespanRecord> = records.iter().filter(|r| r.usable).collect();
    usable.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    let c_fit = usable
        .iter()
        .take(2)
        .map(|r| r.t_measured * r.amplitude.powf(-target))
        .fold(0.0, f64::max);
    let dominated = usable
        .iter()
        .all(|r| r.t_measured <= c_fit * r.amplitude.powf(target) * (1.0 + 1e-12));
    Ok(LifespanCheck {
        slope_ok: (fit.slope - target).abs() <= 0.2 * target.abs(),
        fit,
        target,
        c_fit,
        dominated,
    })
}
