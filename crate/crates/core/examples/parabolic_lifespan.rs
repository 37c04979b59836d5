//! Lifespan of the semilinear heat equation with data `eps exp(-|x|^4)`
//! fitted against the power law in `eps`.
//! Takes one to two minutes. Writes the log-log plot to the system temporary directory.

use carnot_lab::checks::{lifespan_check, SweepSetup};
use carnot_lab::report::{lifespan_plot, SweepRow};
use carnot_lab::solver::{lifespan_sweep, theoretical_slope};
use carnot_lab::StratifiedAlgebra;

fn main() -> carnot_lab::Result<()> {
    let alg = StratifiedAlgebra::heisenberg(1)?;
    let setup = SweepSetup::parabolic();
    let sweep = lifespan_sweep(&alg, &setup.problem(&alg)?, &setup.amplitudes)?;
    for r in &sweep.records {
        println!(
            "amplitude {:.4e}: T = {:.4}  (blew up {}, refinement gap {:.3}, contaminated {})",
            r.amplitude, r.t_measured, r.blew_up, r.refinement_gap, r.boundary_contaminated
        );
    }
    let q = alg.hom_dim() as f64;
    let big_d = alg.cd_parameters()?.big_d;
    let target = theoretical_slope(setup.kind, setup.p, q).expect("subcritical exponent");
    let check = lifespan_check(&sweep.records, q, big_d, target)?;
    println!(
        "slope {:.4} (Q predicts {:.4}, D predicts {:?}), dominated by C_fit = {:.4}: {}",
        check.fit.slope, target, check.fit.theory_cd, check.c_fit, check.dominated
    );
    let rows: Vec<SweepRow> = sweep.records.iter().map(SweepRow::from).collect();
    let path = std::env::temp_dir().join("parabolic_lifespan.svg");
    std::fs::write(&path, lifespan_plot(&rows, &check.fit, q, big_d)?.to_svg()?)?;
    println!("plot written to {}", path.display());
    Ok(())
}
