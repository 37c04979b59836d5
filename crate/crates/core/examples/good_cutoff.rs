//! Heat-smoothed cut-off functions at several radii: their Laplacian and
//! gradient constants do not depend on the radius. Also checks the
//! semigroup gradient bound on a periodic box at two resolutions.

use carnot_lab::checks::{cutoff_check, gradient_bound_check};
use carnot_lab::semigroup::CutoffOptions;
use carnot_lab::StratifiedAlgebra;

fn main() -> carnot_lab::Result<()> {
    let alg = StratifiedAlgebra::heisenberg(1)?;
    let c = cutoff_check(&alg, &[4.0, 8.0, 16.0], (2.7, 5.3, 0.12), &CutoffOptions::default())?;
    for f in &c.cutoffs {
        println!(
            "R = {:>4}: sup|L phi| R^2 = {:.4}  gradient constant = {:.4}  min on ball = {:.4}  support/R = {:.3}",
            f.r, f.lap_const, f.grad_const, f.min_on_ball, f.gamma_factor
        );
    }
    println!("variation: Laplacian {:.2e}, gradient {:.2e}", c.lap_variation, c.grad_variation);

    for b in gradient_bound_check(&alg, &[8, 16])? {
        println!("gradient bound: h = {:.4}  margin = {:.4}  ({} nodes)", b.h, b.margin, b.nodes);
    }
    Ok(())
}
