//! Analytic versus central-difference gradients of both costs.
//!
//! cargo run --release --example gradcheck -- [trials]

use stoi_mse::costs::{gradcheck, CostKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    for kind in CostKind::BOTH {
        for n in [4, 30, 80] {
            let r = gradcheck(kind, trials, n, 2024)?;
            println!("{kind} N={n:<3} max {:.2e} mean {:.2e}", r.max_rel_err, r.mean_rel_err);
        }
    }
    Ok(())
}
