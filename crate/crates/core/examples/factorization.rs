//! Covariance between a centered envelope coordinate and the inverse
//! centered norm, which vanishes as N grows for independent coordinates.
//!
//! cargo run --release --example factorization -- [samples]

use stoi_mse::estimators::{factorization_check, FactorizationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let samples = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100_000);
    let cfg = FactorizationConfig {
        samples,
        ..FactorizationConfig::default()
    };
    println!(
        "{:>5} {:>12} {:>10} {:>12} {:>10} {:>9}",
        "N", "cov(Z1)", "se", "cov(Zmid)", "se", "coverage"
    );
    for r in factorization_check(&cfg)? {
        println!(
            "{:>5} {:>12.3e} {:>10.1e} {:>12.3e} {:>10.1e} {:>9.4}",
            r.n, r.cov_first, r.cov_first_stderr, r.cov_mid, r.cov_mid_stderr, r.slln_coverage
        );
    }
    Ok(())
}
