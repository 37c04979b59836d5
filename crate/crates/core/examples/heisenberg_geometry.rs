//! Group law, dilations and the homogeneous norm on the first Heisenberg
//! group, followed by randomized checks of the group axioms on a few
//! step-2 groups.

use carnot_lab::checks::algebra_suite;
use carnot_lab::{GroupPoint, StratifiedAlgebra};

fn main() -> carnot_lab::Result<()> {
    let h1 = StratifiedAlgebra::heisenberg(1)?;
    let x = GroupPoint::new(vec![1.0, 0.0, 0.0]);
    let y = GroupPoint::new(vec![0.0, 1.0, 0.0]);
    let xy = h1.multiply(&x, &y)?;
    let yx = h1.multiply(&y, &x)?;
    println!("x*y = {:?}", xy.coords);
    println!("y*x = {:?}", yx.coords);
    println!("x^-1 = {:?}", h1.inverse(&x).coords);
    println!("delta_2(x*y) = {:?}", h1.dilate(2.0, &xy)?.coords);
    println!("|x*y| = {:.6}, |delta_2(x*y)| = {:.6}", h1.hom_norm(&xy), h1.hom_norm(&h1.dilate(2.0, &xy)?));
    println!("Q = {}", h1.hom_dim());

    for alg in [
        h1,
        StratifiedAlgebra::heisenberg(2)?,
        StratifiedAlgebra::random_step2(3, 2, 11)?,
    ] {
        let s = algebra_suite(&alg, 1000, 1)?;
        println!(
            "{:>14}: assoc {:.1e}  inverse {:.1e}  dilation {:.1e}  homogeneity {:.1e}",
            s.algebra, s.associativity, s.inverse, s.dilation, s.homogeneity
        );
    }
    Ok(())
}
