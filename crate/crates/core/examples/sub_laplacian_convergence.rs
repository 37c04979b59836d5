//! Second-order convergence and symmetry of the grid sub-Laplacian on the
//! first Heisenberg group.

use carnot_lab::checks::discretization_check;
use carnot_lab::StratifiedAlgebra;

fn main() -> carnot_lab::Result<()> {
    let alg = StratifiedAlgebra::heisenberg(1)?;
    let c = discretization_check(&alg)?;
    for row in &c.rows {
        match row.ratio {
            Some(r) => println!("h = {:<6} error = {:.3e}  ratio = {r:.3}", row.h, row.error),
            None => println!("h = {:<6} error = {:.3e}", row.h, row.error),
        }
    }
    println!("symmetry residual = {:.2e}", c.symmetry);
    Ok(())
}
