//! Analysis, unit-gain resynthesis and the reconstruction error away from
//! the signal edges.
//!
//! cargo run --release --example stft_round_trip

use stoi_mse::signal::synth_speech;
use stoi_mse::stft::{apply_gain_with_noisy_phase, stft_analyze, stft_synthesize, StftConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = synth_speech(2.0, 4)?;
    let cfg = StftConfig::default();
    let spec = stft_analyze(&x, &cfg)?;
    println!("{} frames x {} bins", spec.frames(), spec.bins());
    let ones = ndarray::Array2::ones((spec.frames(), spec.bins()));
    let y = stft_synthesize(&apply_gain_with_noisy_phase(&spec, &ones)?)?;
    let max_err = |lo: usize, hi: usize| {
        (lo..hi)
            .map(|i| (x.samples()[i] - y.samples()[i]).abs())
            .fold(0.0, f64::max)
    };
    // the first and last half frame are covered by window tails only
    let hop = cfg.hop;
    println!("interior max error {:.3e}", max_err(hop, y.len() - hop));
    println!("edge max error     {:.3e}", max_err(0, hop).max(max_err(y.len() - hop, y.len())));
    Ok(())
}
