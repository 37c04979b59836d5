//! Pair a numerical solution of the semilinear heat equation with a product
//! test function built from the smoothed cut-off, and report the weak-form
//! residual.

use carnot_lab::semigroup::{good_cutoff, CutoffOptions};
use carnot_lab::solver::{integrate, Kind, ProblemSpec, SolverOptions};
use carnot_lab::testfn::{weak_form_residual, SpaceTimeTestFn, TestFnKind};
use carnot_lab::{GridField, GridSpec, StratifiedAlgebra, SubLaplacianStencil};

fn main() -> carnot_lab::Result<()> {
    let alg = StratifiedAlgebra::heisenberg(1)?;
    let spec = GridSpec::graded(&alg, 2.7, 5.3, 0.2)?;
    let st = SubLaplacianStencil::new(&alg, &spec)?;
    let u0 = GridField::from_fn(&spec, |x| (-alg.hom_norm_slice(x).powi(4)).exp());
    let pb = ProblemSpec {
        kind: Kind::Parabolic,
        p: 1.3,
        u0,
        u1: None,
        amplitude: 0.5,
        horizon: 2.5,
        options: SolverOptions::default(),
    };
    let (outcome, traj) = integrate(&alg, &pb, 1.0, Some(1))?;
    println!("{} steps to t = {:.3}", outcome.steps, traj.times.last().copied().unwrap_or(0.0));

    let cut = good_cutoff(&alg, &st, &alg.cd_parameters()?, 1.0, &CutoffOptions::default())?;
    let phi = SpaceTimeTestFn::product(TestFnKind::Parabolic, &cut, pb.p)?;
    let data = pb.u0.map(|v| v * pb.amplitude);
    let w = weak_form_residual(&st, &traj, &phi, pb.p, Some(&data))?;
    println!(
        "nonlinear {:.6}  data {:.6}  linear {:.6}  residual {:.2e}  (relative {:.2e})",
        w.nonlinear,
        w.data,
        w.linear,
        w.residual,
        w.residual.abs() / w.scale
    );
    Ok(())
}
