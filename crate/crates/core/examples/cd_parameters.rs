//! Curvature-dimension parameters of step-2 groups from the Gram matrices
//! of the bracket map, cross-checked by a sweep over the unit sphere.

use carnot_lab::checks::cd_check;
use carnot_lab::StratifiedAlgebra;

fn main() -> carnot_lab::Result<()> {
    for alg in [
        StratifiedAlgebra::heisenberg(1)?,
        StratifiedAlgebra::heisenberg(2)?,
        StratifiedAlgebra::random_step2(4, 2, 5)?,
    ] {
        let c = cd_check(&alg, 4000, 1)?;
        let p = c.params;
        println!(
            "{:>14}: rho2 = {:.6}  kappa = {:.6}  d = {}  D = {:.6}  (Q = {}, sweep differs by {:.1e})",
            alg.name(),
            p.rho2,
            p.kappa,
            p.d,
            p.big_d,
            alg.hom_dim(),
            c.max_diff
        );
    }
    Ok(())
}
