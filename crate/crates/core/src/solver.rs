//! Semilinear heat and wave equations with blow-up detection.
//!
//! The parabolic problem `u_t = L u + |u|^p`, `u(0) = eps u0` is advanced by
//! explicit Euler with `dt = min(dt_cfl, 0.1 |u|_inf^(1-p))`. The hyperbolic
//! problem `u_tt = L u + |u|^p`, `u(0) = u0`, `u_t(0) = sigma u1` uses
//! velocity Verlet with `dt = min(dt_cfl, 0.1 S^((1-p)/2))`, where
//! `S = max(|u|_inf, |u_t|_inf^(2/(p+1)))` is the amplitude that sets the
//! local ODE time scale.
//!
//! Blow-up is declared at `|u|_inf >= 1e8`. The crossing times of `1e6`
//! and `1e8` are extrapolated to infinite threshold with the ODE model
//! `T(M) = T - c M^(-beta)`, and the whole solve is repeated at half the
//! step to extrapolate in `dt` as well.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Boundary, GridField, GridSpec, SubLaplacianStencil};
use crate::group::StratifiedAlgebra;
use crate::quad::adaptive_simpson;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Parabolic,
    Hyperbolic,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Parabolic => "parabolic",
            Kind::Hyperbolic => "hyperbolic",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    pub low_threshold: f64,
    pub blowup_threshold: f64,
    /// Relative sponge level that marks a run as contaminated.
    pub contamination_tol: f64,
    /// Largest accepted `|T(dt) - T(dt/2)| / T` for a usable record.
    pub refinement_tol: f64,
    /// Coarsen the grid by the dilation `delta_2` whenever the solution
    /// reaches a tenth of the contamination level in the sponge
    /// (Dirichlet grids only).
    pub regrid: bool,
    /// Multiplies both time-step limits.
    pub dt_scale: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            low_threshold: 1e6,
            blowup_threshold: 1e8,
            contamination_tol: 1e-3,
            refinement_tol: 0.05,
            regrid: false,
            dt_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub kind: Kind,
    pub p: f64,
    pub u0: GridField,
    /// Initial velocity profile; hyperbolic only.
    pub u1: Option<GridField>,
    /// `eps` on `u0` (parabolic) or `sigma` on `u1` (hyperbolic).
    pub amplitude: f64,
    pub horizon: f64,
    pub options: SolverOptions,
}

impl ProblemSpec {
    pub fn grid(&self) -> &GridSpec {
        &self.u0.spec
    }

    fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(invalid("p", format!("must exceed 1, got {}", self.p)));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(invalid("amplitude", "must be positive"));
        }
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if self.kind == Kind::Hyperbolic {
            match &self.u1 {
                None => return Err(invalid("u1", "hyperbolic problems need an initial velocity")),
                Some(u1) if u1.spec != self.u0.spec => {
                    return Err(Error::Malformed("u0 and u1 live on different grids".into()))
                }
                _ => {}
            }
        }
        let o = &self.options;
        if !(o.low_threshold > 0.0 && o.blowup_threshold > o.low_threshold) {
            return Err(invalid("thresholds", "need 0 < low < blow-up threshold"));
        }
        Ok(())
    }
}

/// Outcome of one time integration at a fixed step scale.
#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub blew_up: bool,
    pub t_low: Option<f64>,
    pub t_high: Option<f64>,
    /// Threshold-extrapolated blow-up time, or the final time reached.
    pub t_extrapolated: f64,
    pub contaminated: bool,
    pub steps: usize,
    pub regrids: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LifespanRecord {
    pub kind: Kind,
    pub p: f64,
    pub amplitude: f64,
    pub blew_up: bool,
    pub t_measured: f64,
    /// `(T at dt, T at dt/2)`.
    pub refinement_pair: (f64, f64),
    pub refinement_gap: f64,
    pub boundary_contaminated: bool,
    pub usable: bool,
}

/// Snapshots of a solution for weak-form checks.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

struct Crossings {
    low: f64,
    high: f64,
    t_low: Option<f64>,
    t_high: Option<f64>,
}

impl Crossings {
    /// Log-linear interpolation of threshold crossings between two steps.
    fn update(&mut self, t0: f64, m0: f64, t1: f64, m1: f64) {
        let cross = |level: f64| {
            if m0 < level && m1 >= level && m0 > 0.0 {
                let f = (level.ln() - m0.ln()) / (m1.ln() - m0.ln());
                Some(t0 + f * (t1 - t0))
            } else {
                None
            }
        };
        if self.t_low.is_none() {
            self.t_low = cross(self.low);
        }
        if self.t_high.is_none() {
            self.t_high = cross(self.high);
        }
    }
}

/// Extrapolate crossing times of two thresholds to infinite threshold with
/// `T(M) = T - c M^(-beta)`.
pub fn threshold_extrapolate(t_low: f64, t_high: f64, low: f64, high: f64, beta: f64) -> f64 {
    let a = low.powf(-beta);
    let b = high.powf(-beta);
    let c = (t_high - t_low) / (a - b);
    t_high + c * b
}

fn max_abs(v: &[f64]) -> f64 {
    v.par_iter().fold(|| 0.0f64, |m, x| m.max(x.abs())).reduce(|| 0.0, f64::max)
}

fn sponge_max(spec: &GridSpec, v: &[f64]) -> f64 {
    if spec.boundary() == Boundary::Periodic {
        return 0.0;
    }
    (0..v.len())
        .into_par_iter()
        .filter(|&i| spec.in_sponge(i))
        .map(|i| v[i].abs())
        .reduce(|| 0.0, f64::max)
}

/// Coarsen by `delta_2` with injection; nodes outside the old box get 0.
fn regrid(alg: &StratifiedAlgebra, fine: &GridSpec, u: &[f64]) -> Result<(GridSpec, Vec<f64>)> {
    let coarse = fine.dilated(alg.layers(), 2.0)?;
    let n = fine.ndim();
    let factors: Vec<isize> = alg.layers().iter().map(|&a| 1isize << a).collect();
    let counts = fine.counts().to_vec();
    let origin = fine.origin().to_vec();
    let out: Vec<f64> = (0..coarse.len())
        .into_par_iter()
        .map_init(
            || (vec![0usize; n], vec![0usize; n]),
            |(ci, fi), i| {
                coarse.unravel(i, ci);
                for j in 0..n {
                    let o = origin[j] as isize;
                    let f = o + factors[j] * (ci[j] as isize - o);
                    if f < 0 || f >= counts[j] as isize {
                        return 0.0;
                    }
                    fi[j] = f as usize;
                }
                u[fine.ravel(fi)]
            },
        )
        .collect();
    Ok((coarse, out))
}

/// Integrate once with all step limits multiplied by `scale`.
///
/// When `record_every` is set, every that many steps the solution is
/// appended to the returned trajectory (parabolic, no regridding).
pub fn integrate(
    alg: &StratifiedAlgebra,
    problem: &ProblemSpec,
    scale: f64,
    record_every: Option<usize>,
) -> Result<(RunOutcome, Trajectory)> {
    problem.validate()?;
    let opts = &problem.options;
    let p = problem.p;
    let mut spec = problem.grid().clone();
    let mut stencil = SubLaplacianStencil::new(alg, &spec)?;
    let mut traj = Trajectory {
        times: Vec::new(),
        values: Vec::new(),
    };
    let mut cross = Crossings {
        low: opts.low_threshold,
        high: opts.blowup_threshold,
        t_low: None,
        t_high: None,
    };
    let mut contaminated = false;
    let mut steps = 0usize;
    let mut regrids = 0usize;
    let mut t = 0.0;
    let sc = scale * opts.dt_scale;

    match problem.kind {
        Kind::Parabolic => {
            let mut u: Vec<f64> = problem.u0.values.iter().map(|v| problem.amplitude * v).collect();
            let mut lu = vec![0.0; u.len()];
            let mut m = max_abs(&u);
            let regrid_on =
                opts.regrid && record_every.is_none() && spec.boundary() == Boundary::Dirichlet;
            if let Some(k) = record_every {
                if k == 0 {
                    return Err(invalid("record_every", "must be positive"));
                }
                traj.times.push(0.0);
                traj.values.push(u.clone());
            }
            while t < problem.horizon && m < opts.blowup_threshold {
                if regrid_on
                    && steps.is_multiple_of(16)
                    && sponge_max(&spec, &u) > 0.1 * opts.contamination_tol * m
                {
                    let (s2, u2) = regrid(alg, &spec, &u)?;
                    spec = s2;
                    u = u2;
                    lu = vec![0.0; u.len()];
                    stencil = SubLaplacianStencil::new(alg, &spec)?;
                    regrids += 1;
                }
                let dt_cfl = stencil.heat_dt() * sc;
                let dt_ode = if m > 0.0 { 0.1 * m.powf(1.0 - p) * sc } else { f64::INFINITY };
                let dt = dt_cfl.min(dt_ode).min(problem.horizon - t).max(1e-300);
                stencil.apply_into(&u, &mut lu)?;
                u.par_iter_mut()
                    .zip(&lu)
                    .for_each(|(a, l)| *a += dt * (l + a.abs().powf(p)));
                let m_new = max_abs(&u);
                cross.update(t, m, t + dt, m_new);
                t += dt;
                m = m_new;
                steps += 1;
                if steps.is_multiple_of(64) && sponge_max(&spec, &u) > opts.contamination_tol * m {
                    contaminated = true;
                }
                if let Some(k) = record_every {
                    if steps.is_multiple_of(k) {
                        traj.times.push(t);
                        traj.values.push(u.clone());
                    }
                }
                if !m.is_finite() {
                    break;
                }
            }
            if sponge_max(&spec, &u) > opts.contamination_tol * m {
                contaminated = true;
            }
        }
        Kind::Hyperbolic => {
            let u1 = problem.u1.as_ref().expect("validated");
            let mut u = problem.u0.values.clone();
            let mut v: Vec<f64> = u1.values.iter().map(|x| problem.amplitude * x).collect();
            let mut acc = vec![0.0; u.len()];
            let force = |st: &SubLaplacianStencil, u: &[f64], acc: &mut [f64]| -> Result<()> {
                st.apply_into(u, acc)?;
                acc.par_iter_mut().zip(u).for_each(|(a, x)| *a += x.abs().powf(p));
                Ok(())
            };
            force(&stencil, &u, &mut acc)?;
            let mut dt_cfl = stencil.wave_dt() * sc;
            let mut m = max_abs(&u);
            let regrid_on =
                opts.regrid && record_every.is_none() && spec.boundary() == Boundary::Dirichlet;
            while t < problem.horizon && m < opts.blowup_threshold {
                if regrid_on && steps.is_multiple_of(16) {
                    let level = 0.1 * opts.contamination_tol;
                    if sponge_max(&spec, &u) > level * m || sponge_max(&spec, &v) > level * max_abs(&v) {
                        let (s2, u2) = regrid(alg, &spec, &u)?;
                        let (_, v2) = regrid(alg, &spec, &v)?;
                        spec = s2;
                        u = u2;
                        v = v2;
                        acc = vec![0.0; u.len()];
                        stencil = SubLaplacianStencil::new(alg, &spec)?;
                        force(&stencil, &u, &mut acc)?;
                        dt_cfl = stencil.wave_dt() * sc;
                        regrids += 1;
                    }
                }
                let s = m.max(max_abs(&v).powf(2.0 / (p + 1.0)));
                let dt_ode = if s > 0.0 {
                    0.1 * s.powf(0.5 * (1.0 - p)) * sc
                } else {
                    f64::INFINITY
                };
                let dt = dt_cfl.min(dt_ode).min(problem.horizon - t).max(1e-300);
                let half = 0.5 * dt;
                u.par_iter_mut()
                    .zip(v.par_iter_mut())
                    .zip(&acc)
                    .for_each(|((x, y), a)| {
                        *y += half * a;
                        *x += dt * *y;
                    });
                force(&stencil, &u, &mut acc)?;
                v.par_iter_mut().zip(&acc).for_each(|(y, a)| *y += half * a);
                let m_new = max_abs(&u);
                cross.update(t, m, t + dt, m_new);
                t += dt;
                m = m_new;
                steps += 1;
                if steps.is_multiple_of(64) && sponge_max(&spec, &u) > opts.contamination_tol * m.max(1e-300) {
                    contaminated = true;
                }
                if let Some(k) = record_every {
                    if steps.is_multiple_of(k) {
                        traj.times.push(t);
                        traj.values.push(u.clone());
                    }
                }
                if !m.is_finite() {
                    break;
                }
            }
            if m > 0.0 && sponge_max(&spec, &u) > opts.contamination_tol * m {
                contaminated = true;
            }
        }
    }

    let beta = match problem.kind {
        Kind::Parabolic => p - 1.0,
        Kind::Hyperbolic => 0.5 * (p - 1.0),
    };
    let blew_up = cross.t_high.is_some();
    let t_extrapolated = match (cross.t_low, cross.t_high) {
        (Some(a), Some(b)) => threshold_extrapolate(a, b, cross.low, cross.high, beta),
        (_, Some(b)) => b,
        _ => t,
    };
    Ok((
        RunOutcome {
            blew_up,
            t_low: cross.t_low,
            t_high: cross.t_high,
            t_extrapolated,
            contaminated,
            steps,
            regrids,
        },
        traj,
    ))
}

/// Solve at the default step and at half of it, and combine the two.
pub fn solve(alg: &StratifiedAlgebra, problem: &ProblemSpec) -> Result<LifespanRecord> {
    let (coarse, _) = integrate(alg, problem, 1.0, None)?;
    let (fine, _) = integrate(alg, problem, 0.5, None)?;
    let blew_up = coarse.blew_up && fine.blew_up;
    let (t1, t2) = (coarse.t_extrapolated, fine.t_extrapolated);
    let t_measured = if blew_up {
        match problem.kind {
            // Euler is first order, Verlet second order in dt.
            Kind::Parabolic => 2.0 * t2 - t1,
            Kind::Hyperbolic => (4.0 * t2 - t1) / 3.0,
        }
    } else {
        problem.horizon
    };
    let gap = if blew_up { (t1 - t2).abs() / t2.abs() } else { 0.0 };
    let contaminated = coarse.contaminated || fine.contaminated;
    Ok(LifespanRecord {
        kind: problem.kind,
        p: problem.p,
        amplitude: problem.amplitude,
        blew_up,
        t_measured,
        refinement_pair: (t1, t2),
        refinement_gap: gap,
        boundary_contaminated: contaminated,
        usable: blew_up && !contaminated && gap <= problem.options.refinement_tol,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Sweep {
    pub records: Vec<LifespanRecord>,
    /// `T` is non-increasing in the amplitude over blown-up records.
    pub monotone: bool,
    pub contaminated: bool,
}

/// One solve per amplitude on the template's grid, in amplitude order.
pub fn lifespan_sweep(
    alg: &StratifiedAlgebra,
    template: &ProblemSpec,
    amplitudes: &[f64],
) -> Result<Sweep> {
    if amplitudes.is_empty() {
        return Err(invalid("amplitudes", "empty amplitude list"));
    }
    if amplitudes.len() < 5 {
        return Err(invalid("amplitudes", "need at least 5 amplitudes"));
    }
    let lo = amplitudes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = amplitudes.iter().cloned().fold(0.0, f64::max);
    if !(lo > 0.0) || (hi / lo).log10() < 1.5 - 1e-9 {
        return Err(invalid("amplitudes", "amplitudes must be positive and span 1.5 decades"));
    }
    let mut order: Vec<usize> = (0..amplitudes.len()).collect();
    order.sort_by(|&a, &b| amplitudes[a].total_cmp(&amplitudes[b]));
    let mut records = Vec::with_capacity(amplitudes.len());
    for &i in &order {
        let mut pb = template.clone();
        pb.amplitude = amplitudes[i];
        records.push(solve(alg, &pb)?);
    }
    let blown: Vec<&LifespanRecord> = records.iter().filter(|r| r.blew_up).collect();
    let monotone = blown
        .windows(2)
        .all(|w| w[1].t_measured <= w[0].t_measured * (1.0 + 1e-9));
    let contaminated = records.iter().any(|r| r.boundary_contaminated);
    Ok(Sweep {
        records,
        monotone,
        contaminated,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LifespanFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
    /// Predicted slope with the homogeneous dimension `Q`.
    pub theory_sharp: Option<f64>,
    /// Predicted slope with the curvature-dimension `D`.
    pub theory_cd: Option<f64>,
}

/// Predicted lifespan slope for dimension `dim`, if the exponent is
/// subcritical for that dimension.
pub fn theoretical_slope(kind: Kind, p: f64, dim: f64) -> Option<f64> {
    let denom = match kind {
        Kind::Parabolic => 1.0 / (p - 1.0) - dim / 2.0,
        Kind::Hyperbolic => (p + 1.0) / (p - 1.0) - dim,
    };
    (denom > 0.0).then(|| -1.0 / denom)
}

/// Least squares fit of `ln T` against `ln amplitude` over usable records.
pub fn fit_lifespan_exponent(
    records: &[LifespanRecord],
    kind: Kind,
    p: f64,
    q: f64,
    big_d: f64,
) -> Result<LifespanFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.usable && r.blew_up)
        .map(|r| (r.amplitude.ln(), r.t_measured.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::InsufficientData {
            need: 5,
            have: pts.len(),
        });
    }
    let (slope, intercept, r2) = ols(&pts);
    Ok(LifespanFit {
        slope,
        intercept,
        r2,
        points: pts.len(),
        theory_sharp: theoretical_slope(kind, p, q),
        theory_cd: theoretical_slope(kind, p, big_d),
    })
}

/// Ordinary least squares `y = a x + b`, returning `(a, b, r^2)`.
pub fn ols(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (a, b, r2)
}

/// Blow-up time of `u' = u^p`, `u(0) = c`.
pub fn parabolic_ode_blowup_time(c: f64, p: f64) -> f64 {
    c.powf(1.0 - p) / (p - 1.0)
}

/// Blow-up time of `u'' = |u|^p`, `u(0) = 0`, `u'(0) = sigma`, from the
/// conserved energy: `T = int_0^inf du / sqrt(sigma^2 + 2 u^(p+1)/(p+1))`.
///
/// Integrated in `x = ln u`, with the algebraic tail added in closed form.
pub fn hyperbolic_ode_blowup_time(sigma: f64, p: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(p > 1.0) {
        return Err(invalid("sigma/p", "need sigma > 0 and p > 1"));
    }
    let k = 2.0 / (p + 1.0);
    let f = |x: f64| {
        let u = x.exp();
        u / (sigma * sigma + k * u.powf(p + 1.0)).sqrt()
    };
    // Below x_lo the integrand is u / sigma, integrating to e^{x_lo} / sigma.
    let x_lo = sigma.ln() - 40.0;
    // Beyond x_hi the integrand is e^{-c x} / sqrt(k) to double precision.
    let c = 0.5 * (p - 1.0);
    let x_hi = (2.0 * sigma.ln() + 40.0) / (p + 1.0) + 40.0 / c.min(1.0);
    let head = x_lo.exp() / sigma;
    let mid = adaptive_simpson(f, x_lo, x_hi, 1e-13)?;
    let tail = (-c * x_hi).exp() / (c * k.sqrt());
    Ok(head + mid + tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic_problem(kind: Kind, p: f64, amp: f64) -> (StratifiedAlgebra, ProblemSpec) {
        let alg = StratifiedAlgebra::heisenberg(1).unwrap();
        let spec = GridSpec::periodic(&[1.0, 1.0, 0.5], &[8, 8, 16]).unwrap();
        let one = GridField::from_fn(&spec, |_| 1.0);
        let (u0, u1) = match kind {
            Kind::Parabolic => (one, None),
            Kind::Hyperbolic => (GridField::zeros(&spec), Some(one)),
        };
        let pb = ProblemSpec {
            kind,
            p,
            u0,
            u1,
            amplitude: amp,
            horizon: 1e3,
            options: SolverOptions::default(),
        };
        (alg, pb)
    }

    #[test]
    fn uniform_parabolic_matches_ode() {
        let (alg, pb) = periodic_problem(Kind::Parabolic, 2.0, 1.0);
        let rec = solve(&alg, &pb).unwrap();
        assert!(rec.blew_up && rec.usable);
        assert!((rec.t_measured - 1.0).abs() < 0.01, "{rec:?}");
    }

    #[test]
    fn uniform_hyperbolic_matches_quadrature() {
        let (alg, pb) = periodic_problem(Kind::Hyperbolic, 1.4, 0.5);
        let rec = solve(&alg, &pb).unwrap();
        let want = hyperbolic_ode_blowup_time(0.5, 1.4).unwrap();
        assert!(rec.blew_up);
        assert!((rec.t_measured / want - 1.0).abs() < 0.02, "{rec:?} vs {want}");
    }

    #[test]
    fn zero_data_never_blows_up() {
        let (alg, mut pb) = periodic_problem(Kind::Hyperbolic, 1.4, 1.0);
        pb.u1 = Some(GridField::zeros(pb.grid()));
        pb.horizon = 2.0;
        let rec = solve(&alg, &pb).unwrap();
        assert!(!rec.blew_up);
        assert_eq!(rec.t_measured, 2.0);
    }

    #[test]
    fn threshold_extrapolation_is_exact_for_the_model() {
        let (t, c, beta) = (3.0, 2.0, 0.3);
        let at = |m: f64| t - c * m.powf(-beta);
        let got = threshold_extrapolate(at(1e6), at(1e8), 1e6, 1e8, beta);
        assert!((got - t).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_synthetic_slope() {
        let recs: Vec<LifespanRecord> = [0.01, 0.03, 0.1, 0.3, 1.0]
            .iter()
            .map(|&a: &f64| LifespanRecord {
                kind: Kind::Parabolic,
                p: 1.3,
                amplitude: a,
                blew_up: true,
                t_measured: a.powf(-0.75),
                refinement_pair: (0.0, 0.0),
                refinement_gap: 0.0,
                boundary_contaminated: false,
                usable: true,
            })
            .collect();
        let fit = fit_lifespan_exponent(&recs, Kind::Parabolic, 1.3, 4.0, 8.0).unwrap();
        assert!((fit.slope + 0.75).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!((fit.theory_sharp.unwrap() + 0.75).abs() < 1e-12);
        assert_eq!(fit.theory_cd, None);
        assert!(matches!(
            fit_lifespan_exponent(&recs[..4], Kind::Parabolic, 1.3, 4.0, 8.0),
            Err(Error::InsufficientData { need: 5, have: 4 })
        ));
    }

    #[test]
    fn theoretical_slopes() {
        assert!((theoretical_slope(Kind::Parabolic, 1.3, 4.0).unwrap() + 0.75).abs() < 1e-12);
        assert!((theoretical_slope(Kind::Hyperbolic, 1.4, 4.0).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(theoretical_slope(Kind::Parabolic, 1.6, 4.0), None);
    }

    #[test]
    fn sweep_validates_amplitudes() {
        let (alg, pb) = periodic_problem(Kind::Parabolic, 2.0, 1.0);
        assert!(lifespan_sweep(&alg, &pb, &[]).is_err());
        assert!(lifespan_sweep(&alg, &pb, &[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
    }
}
