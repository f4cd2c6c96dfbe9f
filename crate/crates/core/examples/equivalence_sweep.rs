//! Distance between the correlation-optimal and conditional-mean estimators
//! as the envelope length grows.
//!
//! cargo run --release --example equivalence_sweep -- [samples]

use stoi_mse::estimators::{equivalence_sweep, SweepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let samples = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100_000);
    let cfg = SweepConfig {
        samples,
        ..SweepConfig::default()
    };
    println!("{:>5} {:>12} {:>12}", "N", "1 - rho", "stderr");
    for row in equivalence_sweep(&cfg)? {
        println!("{:>5} {:>12.6} {:>12.6}", row.n, row.metric, row.stderr);
    }
    Ok(())
}
