//! The bump profile of the graded test functions, its domination property,
//! the wave-estimate constant across radii and the integral inequality.

use carnot_lab::testfn::{graded_wave_estimate_audit, lemma_6_4_sweep, make_bump, AuditGrid};
use carnot_lab::StratifiedAlgebra;

fn main() -> carnot_lab::Result<()> {
    let alg = StratifiedAlgebra::heisenberg(1)?;
    let p = 1.5;
    let bump = make_bump(p)?;
    println!("p = {p}: ell = {}, C_g = {:.4}", bump.ell, bump.c_g);
    for s in [0.1, 0.5, 0.9, 0.99] {
        println!("  g({s}) = {:.4e}, (|g'| + |g''|) / g^(1/p) = {:.4}", bump.value(s), bump.domination_ratio(s));
    }

    let grid = AuditGrid {
        h: 1.0 / 8.0,
        check_points: 5000,
        ..AuditGrid::default()
    };
    let audit = graded_wave_estimate_audit(&alg, p, &[4.0, 8.0, 16.0], &grid)?;
    for row in &audit.rows {
        println!("R = {:>4}: K = {:.3}  (finite-difference error {:.2e})", row.r, row.k, row.discrete_error);
    }
    println!("max/min K = {:.4}", audit.ratio);

    let sweep = lemma_6_4_sweep(|s| bump.value(s))?;
    let worst = sweep.iter().min_by(|a, b| a.margin.total_cmp(&b.margin)).expect("non-empty sweep");
    println!(
        "integral inequality: {} triples, smallest margin {:.3e} at A = {:.3}, h = {:.3}, R = {:.3}",
        sweep.len(),
        worst.margin,
        worst.a,
        worst.h,
        worst.r
    );
    Ok(())
}
