//! Both Bayesian estimators on one random log-normal posterior, exact and
//! Monte Carlo, and the correlation each achieves in expectation.
//!
//! cargo run --release --example estimators -- [N]

use stoi_mse::estimators::{expected_elc, mmelc_estimate, mmse_estimate, mmse_exact, LogNormalFamily};
use stoi_mse::seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(16);
    let (_obs, model) = LogNormalFamily::default().draw(n, &mut seed::rng(5))?;
    let exact = mmse_exact(&model)?;
    let mc = mmse_estimate(&model, 100_000, 6)?;
    let worst = exact
        .iter()
        .zip(&mc.estimate)
        .zip(&mc.stderr)
        .map(|((e, m), s)| (e - m).abs() / s)
        .fold(0.0, f64::max);
    println!("MMSE: largest Monte Carlo deviation {worst:.2} standard errors");
    let mmelc = mmelc_estimate(&model, 100_000, 7)?;
    let rho = stoi_mse::stats::pearson(&mmelc.estimate, &exact)?;
    println!("correlation between the two estimators: {rho:.6}");
    for (name, est) in [("MMELC", &mmelc.estimate), ("MMSE", &exact)] {
        let e = expected_elc(&model, est, 100_000, 8)?;
        println!("{name:<6} expected ELC {:.6} (se {:.1e})", e.mean, e.stderr);
    }
    Ok(())
}
