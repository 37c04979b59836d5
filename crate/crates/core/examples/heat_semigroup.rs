//! The discrete heat semigroup on the first Heisenberg group: mass is
//! conserved and the peak decays like `t^(-Q/2)`.

use carnot_lab::semigroup::{heat_evolve, HeatOptions};
use carnot_lab::{GridField, GridSpec, StratifiedAlgebra, SubLaplacianStencil};

fn main() -> carnot_lab::Result<()> {
    let alg = StratifiedAlgebra::heisenberg(1)?;
    let spec = GridSpec::graded(&alg, 4.0, 3.0, 0.1)?;
    let st = SubLaplacianStencil::new(&alg, &spec)?;
    let f = GridField::from_fn(&spec, |x| (-(alg.hom_norm_slice(x) / 0.15).powi(4)).exp());
    let times = vec![0.0625, 0.125, 0.25, 0.5];
    let run = heat_evolve(&st, &f, 0.5, &HeatOptions { snapshot_times: times, ..HeatOptions::default() })?;
    println!("{} nodes, dt = {:.2e}, {} steps, mass drift {:.2e}", spec.len(), run.dt, run.steps, run.mass_drift());
    let mut prev: Option<f64> = None;
    for (t, u) in &run.snapshots {
        let m = u.max();
        match prev {
            Some(pm) => println!("t = {t:.4}: sup = {m:.4e}, local exponent {:.3}", (pm / m).log2()),
            None => println!("t = {t:.4}: sup = {m:.4e}"),
        }
        prev = Some(m);
    }
    println!("expected exponent Q/2 = {}", alg.hom_dim() as f64 / 2.0);
    Ok(())
}
