//! Miniature end-to-end experiment: trains both system types for two
//! envelope lengths, enhances matched and held-out noise, and prints the
//! result table.
//!
//! cargo run --release --example enhance_pipeline -- [out_dir]

use stoi_mse::harness::{run_pipeline, ExperimentConfig, LrSearchConfig};
use stoi_mse::signal::NoiseKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "pipeline_demo".into());
    let mut cfg = ExperimentConfig {
        n_list: vec![4, 15],
        test_noises: vec![NoiseKind::Ssn, NoiseKind::Bus],
        test_snr_db: vec![0.0, 5.0],
        train_utterances: 40,
        val_utterances: 8,
        test_utterances: 10,
        hidden: vec![64, 64],
        lr_search: Some(LrSearchConfig {
            n: 15,
            epochs: 2,
            ..LrSearchConfig::default()
        }),
        seed: 3,
        ..ExperimentConfig::default()
    };
    cfg.elc.max_epochs = 4;
    cfg.mse.max_epochs = 4;
    let table = run_pipeline(&cfg, out.as_ref())?;
    println!("{:<12} {:<5} {:>5} {:>3} {:<10} {:>9}", "system", "noise", "snr", "N", "metric", "value");
    for r in table.rows().iter().filter(|r| !r.metric.starts_with("gain_corr_b")) {
        println!(
            "{:<12} {:<5} {:>5} {:>3} {:<10} {:>9.4}",
            r.system, r.noise, r.snr_db, r.n, r.metric, r.value
        );
    }
    Ok(())
}
