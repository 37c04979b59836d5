//! Heat semigroup on grids and the smoothed cut-off functions built from it.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{GridField, GridSpec, SubLaplacianStencil};
use crate::group::{CdParams, StratifiedAlgebra};
use crate::profiles::{compose, falloff, ramp, root};

/// Values below this fraction of the peak are ignored by the sponge check.
const SPONGE_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct HeatRun {
    pub initial: GridField,
    pub final_field: GridField,
    pub dt: f64,
    pub steps: usize,
    pub t_final: f64,
    pub snapshots: Vec<(f64, GridField)>,
    /// Set when the solution reached the sponge layer.
    pub sponge_touched: bool,
    pub mass_initial: f64,
    pub mass_final: f64,
}

impl HeatRun {
    pub fn mass_drift(&self) -> f64 {
        (self.mass_final - self.mass_initial).abs() / self.mass_initial.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Clone, Debug, Default)]
pub struct HeatOptions {
    /// Time step; defaults to `0.4 h_min^2 / sigma`.
    pub dt: Option<f64>,
    /// Times at which to keep a copy of the solution.
    pub snapshot_times: Vec<f64>,
}

/// Explicit Euler for `u_t = L u` up to `t_final`.
pub fn heat_evolve(
    stencil: &SubLaplacianStencil,
    u0: &GridField,
    t_final: f64,
    opts: &HeatOptions,
) -> Result<HeatRun> {
    let mut snaps: Vec<f64> = opts.snapshot_times.clone();
    snaps.sort_by(f64::total_cmp);
    let mut snapshots = Vec::new();
    let mut next = 0;
    let run = heat_evolve_observed(stencil, u0, t_final, opts.dt, |_, t, u| {
        while next < snaps.len() && snaps[next] <= t + 1e-12 * t_final.max(1.0) {
            snapshots.push((t, GridField::from_values(stencil.spec(), u.to_vec()).unwrap()));
            next += 1;
        }
    })?;
    Ok(HeatRun { snapshots, ..run })
}

/// [`heat_evolve`] calling `observer(step, t, u)` after every step
/// (and once before the first).
pub fn heat_evolve_observed<F: FnMut(usize, f64, &[f64])>(
    stencil: &SubLaplacianStencil,
    u0: &GridField,
    t_final: f64,
    dt: Option<f64>,
    mut observer: F,
) -> Result<HeatRun> {
    if u0.spec != *stencil.spec() {
        return Err(Error::Malformed("field and stencil grids differ".into()));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(invalid("t_final", "must be finite and nonnegative"));
    }
    let bound = stencil.stability_bound();
    let target = match dt {
        Some(d) if !(d > 0.0) => return Err(invalid("dt", "must be positive")),
        Some(d) if d > bound => return Err(Error::CflViolation { dt: d, bound }),
        Some(d) => d,
        None => stencil.heat_dt(),
    };
    let steps = if t_final == 0.0 {
        0
    } else {
        (t_final / target).ceil() as usize
    };
    let dt = if steps == 0 { target } else { t_final / steps as f64 };

    let mut u = u0.values.clone();
    let mut lu = vec![0.0; u.len()];
    observer(0, 0.0, &u);
    for s in 0..steps {
        stencil.apply_into(&u, &mut lu)?;
        u.par_iter_mut().zip(&lu).for_each(|(a, l)| *a += dt * l);
        observer(s + 1, (s + 1) as f64 * dt, &u);
    }
    let final_field = GridField::from_values(stencil.spec(), u)?;
    let peak = final_field.max_abs().max(u0.max_abs());
    let sponge_touched = final_field.sponge_max_abs() > SPONGE_TOL * peak;
    Ok(HeatRun {
        initial: u0.clone(),
        mass_initial: u0.sum() * u0.spec.cell_volume(),
        mass_final: final_field.integral(),
        final_field,
        dt,
        steps,
        t_final,
        snapshots: Vec::new(),
        sponge_touched,
    })
}

/// Jet in `q` of `outer(q^(1/k) / r)`, where `q` is the gauge polynomial.
pub fn gauge_profile(q: f64, k: f64, r: f64, outer: impl Fn(f64) -> [f64; 3]) -> [f64; 3] {
    if q <= 0.0 {
        return [outer(0.0)[0], 0.0, 0.0];
    }
    let [s, ds, dds] = root(q, k);
    let out = outer(s / r);
    if out[1] == 0.0 && out[2] == 0.0 {
        return [out[0], 0.0, 0.0];
    }
    compose(out, [s / r, ds / r, dds / r])
}

/// Radial falloff of the coarse cut-off: 1 on `[0, 1]`, 0 beyond `gamma`.
pub fn coarse_profile(s: f64, gamma: f64) -> [f64; 3] {
    falloff(s, 1.0, gamma)
}

/// The ramp applied to the evolved cut-off: 0 on `[0, 1/4]`, 1 on `[3/4, 1]`.
pub fn cutoff_ramp(s: f64) -> [f64; 3] {
    ramp(s, 0.25, 0.75)
}

fn check_ball_fits(alg: &StratifiedAlgebra, spec: &GridSpec, radius: f64) -> Result<()> {
    for (j, &a) in alg.layers().iter().enumerate() {
        let w = spec.sponge_width(j);
        let lo = spec.coord(j, w);
        let hi = spec.coord(j, spec.counts()[j] - 1 - w);
        let need = radius.powi(a as i32);
        if lo > -need || hi < need {
            return Err(Error::GridTooSmall(format!(
                "ball of radius {radius} does not fit inside the sponge on axis {j}"
            )));
        }
    }
    Ok(())
}

/// `psi_0 = eta(|x| / R)` sampled on the grid, with `eta` equal to 1 up to
/// 1 and 0 from `gamma` on.
pub fn coarse_cutoff(alg: &StratifiedAlgebra, spec: &GridSpec, r: f64, gamma: f64) -> Result<GridField> {
    if !(r > 0.0) {
        return Err(invalid("R", "must be positive"));
    }
    if !(gamma > 1.0) {
        return Err(invalid("gamma", "must exceed 1"));
    }
    check_ball_fits(alg, spec, gamma * r)?;
    Ok(GridField::from_fn(spec, |x| {
        coarse_profile(alg.hom_norm_slice(x) / r, gamma)[0]
    }))
}

/// `sup (Gamma(f) + (R/2)^2 Gamma^Z(f)) * R^2` over valid nodes.
pub fn gradient_constant(stencil: &SubLaplacianStencil, f: &GridField, r: f64) -> Result<f64> {
    let g = stencil.gamma(f)?;
    let gz = stencil.gamma_z(f)?;
    let nu = 0.25 * r * r;
    Ok(sup_valid(stencil, |i| (g.values[i] + nu * gz.values[i]) * r * r))
}

fn sup_valid(stencil: &SubLaplacianStencil, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    (0..stencil.spec().len())
        .into_par_iter()
        .filter(|&i| stencil.is_valid(i))
        .map(f)
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

fn inf_valid(stencil: &SubLaplacianStencil, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    (0..stencil.spec().len())
        .into_par_iter()
        .filter(|&i| stencil.is_valid(i))
        .map(f)
        .reduce(|| f64::INFINITY, f64::min)
}

#[derive(Clone, Debug)]
pub struct CutoffOptions {
    /// Support radius factor of the coarse cut-off.
    pub gamma: f64,
    /// How many times `C_1` may be halved when the bands are violated.
    pub max_retries: usize,
    /// Use this `C_1` instead of the formula.
    pub c1_override: Option<f64>,
}

impl Default for CutoffOptions {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            max_retries: 4,
            c1_override: None,
        }
    }
}

/// The smoothed cut-off `phi_R = rho(P_{t_R} psi_0)` and its measured
/// constants.
#[derive(Clone, Debug, Serialize)]
pub struct CutoffFunction {
    #[serde(skip)]
    pub field: GridField,
    /// `P_{t_R} psi_0`, before the ramp.
    #[serde(skip)]
    pub evolved: GridField,
    pub r: f64,
    /// Measured support radius divided by `R`.
    pub gamma_factor: f64,
    pub coarse_gamma: f64,
    pub t_r: f64,
    pub c0: f64,
    pub c1: f64,
    pub nu: f64,
    pub a: f64,
    /// `sup |L phi_R| R^2` through the chain rule.
    pub lap_const: f64,
    /// `sup |L phi_R| R^2` from the stencil applied to `phi_R` directly.
    pub lap_const_direct: f64,
    /// `sup (Gamma + (R/2)^2 Gamma^Z)(phi_R) R^2`.
    pub grad_const: f64,
    /// Smallest value of `phi_R` on the ball of radius `R`.
    pub min_on_ball: f64,
    pub retries: usize,
    pub sponge_clean: bool,
    pub h: f64,
}

/// Build `phi_R` on the grid of `stencil`: evolve the coarse cut-off to
/// `t_R = C_1 R^2` with `C_1 = min(1/(8 kappa), 1/(64 C_0 d))` and compose
/// with [`cutoff_ramp`]. `C_1` is halved while `P_t psi_0 >= 3/4` fails on
/// the ball of radius `R`.
pub fn good_cutoff(
    alg: &StratifiedAlgebra,
    stencil: &SubLaplacianStencil,
    cd: &CdParams,
    r: f64,
    opts: &CutoffOptions,
) -> Result<CutoffFunction> {
    let spec = stencil.spec();
    let psi0 = coarse_cutoff(alg, spec, r, opts.gamma)?;
    let c0 = gradient_constant(stencil, &psi0, r)?;
    let mut c1 = match opts.c1_override {
        Some(c) => c,
        None => {
            let k = if cd.kappa > 0.0 { 1.0 / (8.0 * cd.kappa) } else { f64::INFINITY };
            k.min(1.0 / (64.0 * c0 * cd.d as f64))
        }
    };
    let norms: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; spec.ndim()],
            |buf, i| {
                spec.node_coords(i, buf);
                alg.hom_norm_slice(buf)
            },
        )
        .collect();

    for attempt in 0..=opts.max_retries {
        let t_r = c1 * r * r;
        let run = heat_evolve(stencil, &psi0, t_r, &HeatOptions::default())?;
        let psi = run.final_field;
        let min_on_ball = (0..spec.len())
            .filter(|&i| norms[i] <= r)
            .map(|i| psi.values[i])
            .fold(f64::INFINITY, f64::min);
        if min_on_ball < 0.75 {
            c1 *= 0.5;
            if attempt == opts.max_retries {
                return Err(Error::CutoffFailed(format!(
                    "P_t psi_0 drops to {min_on_ball} on the ball after {} retries",
                    opts.max_retries
                )));
            }
            continue;
        }

        let rho: Vec<[f64; 3]> = psi.values.par_iter().map(|&v| cutoff_ramp(v)).collect();
        let phi = GridField::from_values(spec, rho.iter().map(|j| j[0].clamp(0.0, 1.0)).collect())?;
        let lpsi = stencil.apply(&psi)?;
        let gpsi = stencil.gamma(&psi)?;
        let gzpsi = stencil.gamma_z(&psi)?;
        let lphi = stencil.apply(&phi)?;
        let nu = 0.25 * r * r;
        let r2 = r * r;
        let lap_const = sup_valid(stencil, |i| {
            (rho[i][1] * lpsi.values[i] + rho[i][2] * gpsi.values[i]).abs() * r2
        });
        let lap_const_direct = sup_valid(stencil, |i| lphi.values[i].abs() * r2);
        let grad_const = sup_valid(stencil, |i| {
            rho[i][1] * rho[i][1] * (gpsi.values[i] + nu * gzpsi.values[i]) * r2
        });
        let support = (0..spec.len())
            .filter(|&i| phi.values[i] > 0.0)
            .map(|i| norms[i])
            .fold(0.0, f64::max);
        let min_phi_ball = (0..spec.len())
            .filter(|&i| norms[i] <= r)
            .map(|i| phi.values[i])
            .fold(f64::INFINITY, f64::min);
        let sponge_clean = phi.sponge_max_abs() == 0.0;
        return Ok(CutoffFunction {
            field: phi,
            evolved: psi,
            r,
            gamma_factor: support / r,
            coarse_gamma: opts.gamma,
            t_r,
            c0,
            c1,
            nu,
            a: -cd.kappa / nu,
            lap_const,
            lap_const_direct,
            grad_const,
            min_on_ball: min_phi_ball,
            retries: attempt,
            sponge_clean,
            h: stencil.h_min(),
        });
    }
    unreachable!("the retry loop always returns")
}

/// Pointwise comparison of both sides of the semigroup gradient bound
/// `Gamma(P_t f) + nu Gamma^Z(P_t f) + c(t) (L P_t f)^2
///   <= e^{-2At} P_t(Gamma(f) + nu Gamma^Z(f))`
/// with `A = -kappa/nu` and `c(t) = (e^{-2At} - 1)/(-A d)` (or `2t/d` when
/// `A = 0`).
#[derive(Clone, Debug, Serialize)]
pub struct GradientBoundReport {
    pub t: f64,
    pub nu: f64,
    pub a: f64,
    pub h: f64,
    /// `min (RHS - LHS)` over valid nodes.
    pub margin: f64,
    pub rhs_max: f64,
    pub nodes: usize,
}

pub fn verify_semigroup_gradient_bound(
    stencil: &SubLaplacianStencil,
    cd: &CdParams,
    f: &GridField,
    t: f64,
    nu: f64,
) -> Result<GradientBoundReport> {
    if !(nu > 0.0) {
        return Err(invalid("nu", "must be positive"));
    }
    let a = -cd.kappa / nu;
    let d = cd.d as f64;
    let coef = if a == 0.0 {
        2.0 * t / d
    } else {
        ((-2.0 * a * t).exp() - 1.0) / (-a * d)
    };
    let damp = (-2.0 * a * t).exp();

    let opts = HeatOptions::default();
    let ptf = heat_evolve(stencil, f, t, &opts)?.final_field;
    let g = stencil.gamma(&ptf)?;
    let gz = stencil.gamma_z(&ptf)?;
    let l = stencil.apply(&ptf)?;

    let gf = stencil.gamma(f)?;
    let gzf = stencil.gamma_z(f)?;
    let energy = GridField::from_values(
        stencil.spec(),
        gf.values.iter().zip(&gzf.values).map(|(a, b)| a + nu * b).collect(),
    )?;
    let pt_energy = heat_evolve(stencil, &energy, t, &opts)?.final_field;

    let margin = inf_valid(stencil, |i| {
        let lhs = g.values[i] + nu * gz.values[i] + coef * l.values[i] * l.values[i];
        let rhs = damp * pt_energy.values[i];
        rhs - lhs
    });
    let margin = if margin.is_finite() { margin } else { 0.0 };
    let nodes = stencil.valid_mask().iter().filter(|&&v| v).count();
    Ok(GradientBoundReport {
        t,
        nu,
        a,
        h: stencil.h_min(),
        margin,
        rhs_max: pt_energy.max_abs() * damp,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h1() -> StratifiedAlgebra {
        StratifiedAlgebra::heisenberg(1).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let alg = h1();
        let spec = GridSpec::graded(&alg, 1.0, 1.0, 0.125).unwrap();
        let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
        let run = heat_evolve(&st, &GridField::zeros(&spec), 0.05, &HeatOptions::default()).unwrap();
        assert_eq!(run.final_field.max_abs(), 0.0);
    }

    #[test]
    fn mass_and_max_principle() {
        let alg = h1();
        let spec = GridSpec::graded(&alg, 2.5, 2.0, 0.125).unwrap();
        let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
        let u0 = GridField::from_fn(&spec, |x| (-alg.gauge_poly().eval(x) * 16.0).exp());
        let run = heat_evolve(
            &st,
            &u0,
            0.05,
            &HeatOptions {
                snapshot_times: vec![0.01, 0.05],
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!run.sponge_touched);
        assert!(run.mass_drift() < 1e-6, "drift {}", run.mass_drift());
        assert!(run.final_field.min() >= -1e-8);
        assert!(run.final_field.max() <= u0.max() + 1e-8);
        assert_eq!(run.snapshots.len(), 2);
    }

    #[test]
    fn rejects_large_dt() {
        let alg = h1();
        let spec = GridSpec::graded(&alg, 1.0, 1.0, 0.125).unwrap();
        let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
        let u0 = GridField::zeros(&spec);
        let res = heat_evolve(
            &st,
            &u0,
            0.1,
            &HeatOptions {
                dt: Some(0.1),
                ..Default::default()
            },
        );
        assert!(matches!(res, Err(Error::CflViolation { .. })));
    }

    #[test]
    fn coarse_cutoff_values() {
        let alg = h1();
        let spec = GridSpec::graded(&alg, 2.7, 5.3, 0.15).unwrap();
        let psi = coarse_cutoff(&alg, &spec, 1.0, 2.0).unwrap();
        assert_eq!(psi.value_at_origin(), 1.0);
        let mut x = vec![0.0; 3];
        for i in 0..spec.len() {
            spec.node_coords(i, &mut x);
            if alg.hom_norm_slice(&x) >= 2.0 {
                assert_eq!(psi.values[i], 0.0);
            }
        }
        assert!(matches!(
            coarse_cutoff(&alg, &spec, 2.0, 2.0),
            Err(Error::GridTooSmall(_))
        ));
    }

    #[test]
    fn gradient_bound_trivial_for_zero() {
        let alg = h1();
        let spec = GridSpec::periodic(&[1.0, 1.0, 0.5], &[8, 8, 32]).unwrap();
        let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
        let cd = alg.cd_parameters().unwrap();
        let rep = verify_semigroup_gradient_bound(&st, &cd, &GridField::zeros(&spec), 0.01, 1.0).unwrap();
        assert_eq!(rep.margin, 0.0);
    }
}
