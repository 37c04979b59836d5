//! Critical exponents of the heat, wave and stationary problems with the
//! homogeneous dimension and with the curvature-dimension `D`.

use carnot_lab::regime::classify;
use carnot_lab::StratifiedAlgebra;

fn main() -> carnot_lab::Result<()> {
    let p: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.5);
    for name in ["heisenberg-1", "heisenberg-2"] {
        let t = classify(&StratifiedAlgebra::preset(name)?, p)?;
        println!("{name}, p = {p} (Q = {}, D = {}):", t.q, t.big_d);
        for c in t.cells() {
            let thr = c.cell.exact.map(|r| r.to_string()).unwrap_or_else(|| "inf".into());
            println!("  {:<11} {:<5} threshold {:<6} {}", c.problem, c.variant, thr, c.cell.regime.as_str());
        }
    }
    Ok(())
}
