//! Weak-form residuals of solver output against product test functions.

use carnot_lab::semigroup::{good_cutoff, CutoffOptions};
use carnot_lab::solver::{integrate, Kind, ProblemSpec, SolverOptions, Trajectory};
use carnot_lab::testfn::{weak_form_residual, SpaceTimeTestFn, TestFnKind};
use carnot_lab::{GridField, GridSpec, StratifiedAlgebra, SubLaplacianStencil};

fn parabolic_run() -> (StratifiedAlgebra, SubLaplacianStencil, ProblemSpec, Trajectory) {
    let alg = StratifiedAlgebra::heisenberg(1).unwrap();
    let spec = GridSpec::graded(&alg, 2.7, 5.3, 0.2).unwrap();
    let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
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
    let (out, traj) = integrate(&alg, &pb, 1.0, Some(1)).unwrap();
    assert!(!out.blew_up);
    (alg, st, pb, traj)
}

#[test]
fn parabolic_solution_satisfies_weak_form() {
    let (alg, st, pb, traj) = parabolic_run();
    let cd = alg.cd_parameters().unwrap();
    let cut = good_cutoff(&alg, &st, &cd, 1.0, &CutoffOptions::default()).unwrap();
    let phi = SpaceTimeTestFn::product(TestFnKind::Parabolic, &cut, pb.p).unwrap();

    let u0 = pb.u0.map(|v| v * pb.amplitude);
    let exact = weak_form_residual(&st, &traj, &phi, pb.p, Some(&u0)).unwrap();
    let rel = exact.residual.abs() / exact.scale;
    println!("{exact:?} relative {rel:e}");
    assert!(rel < 1e-2, "{exact:?}");

    // A trajectory that does not solve the equation is detected.
    let wrong = Trajectory {
        times: traj.times.clone(),
        values: traj.values.iter().map(|v| v.iter().map(|x| 1.2 * x).collect()).collect(),
    };
    let bad = weak_form_residual(&st, &wrong, &phi, pb.p, Some(&u0)).unwrap();
    println!("{bad:?}");
    assert!(bad.residual.abs() / bad.scale > 10.0 * rel, "{bad:?}");

    // The test function must be supported inside the simulated interval.
    let keep = traj.times.iter().take_while(|&&t| t <= 1.5).count();
    let short = Trajectory {
        times: traj.times[..keep].to_vec(),
        values: traj.values[..keep].to_vec(),
    };
    assert!(weak_form_residual(&st, &short, &phi, pb.p, Some(&pb.u0)).is_err());
}
