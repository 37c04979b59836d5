//! Monte Carlo volumes of homogeneous-norm balls scale like `R^Q`.

use carnot_lab::checks::haar_scaling;
use carnot_lab::StratifiedAlgebra;

fn main() -> carnot_lab::Result<()> {
    for name in ["heisenberg-1", "heisenberg-2", "engel"] {
        let alg = StratifiedAlgebra::preset(name)?;
        let (v, se) = alg.ball_volume_mc(1.0, 200_000, 3)?;
        println!("{name}: vol(B_1) = {v:.4} +/- {se:.4}");
        for (seed, r) in [(7, 1.0), (9, 2.0)] {
            let h = haar_scaling(&alg, r, 200_000, seed)?;
            println!(
                "  R = {r}: vol(B_2R)/vol(B_R) = {:.3} +/- {:.3}, 2^Q = {}",
                h.ratio, h.stderr, h.expected
            );
        }
    }
    Ok(())
}
