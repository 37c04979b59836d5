//! Long-time behavior of the discrete heat semigroup.

use carnot_lab::semigroup::{heat_evolve, HeatOptions};
use carnot_lab::{GridField, GridSpec, StratifiedAlgebra, SubLaplacianStencil};

/// The heat kernel of a group of homogeneous dimension `Q` has
/// `sup P_t f ~ t^(-Q/2) int f` once `t` dominates the width of `f`.
#[test]
fn sup_norm_decays_at_the_homogeneous_rate() {
    let alg = StratifiedAlgebra::heisenberg(1).unwrap();
    let spec = GridSpec::graded(&alg, 4.0, 3.0, 0.1).unwrap();
    let st = SubLaplacianStencil::new(&alg, &spec).unwrap();
    let f = GridField::from_fn(&spec, |x| (-(alg.hom_norm_slice(x) / 0.15).powi(4)).exp());
    let opts = HeatOptions {
        snapshot_times: vec![0.125, 0.25, 0.5],
        ..HeatOptions::default()
    };
    let run = heat_evolve(&st, &f, 0.5, &opts).unwrap();
    assert!(!run.sponge_touched);
    assert!(run.mass_drift() < 1e-3, "mass drift {}", run.mass_drift());
    let sup: Vec<f64> = run.snapshots.iter().map(|(_, u)| u.max()).collect();
    let rates: Vec<f64> = sup.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    println!("sup {sup:?} local exponents {rates:?}");
    // Each doubling of t divides the peak by about 2^(Q/2) = 4.
    assert!((rates[1] - 2.0).abs() < 0.1, "{rates:?}");
    assert!((rates[1] - 2.0).abs() <= (rates[0] - 2.0).abs() + 1e-3, "{rates:?}");
}
