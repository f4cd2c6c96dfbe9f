//! Intelligibility of noisy speech as the SNR rises, with both the plain
//! correlation score and the clipped extended variant.
//!
//! cargo run --release --example stoi_score

use stoi_mse::bands::{band_envelope, BandLayout};
use stoi_mse::intelligibility::{approximate_stoi, extended_stoi_with_clipping};
use stoi_mse::signal::{mix_at_snr, synth_noise, synth_speech, NoiseKind, PIPELINE_RATE_HZ};
use stoi_mse::stft::{stft_analyze, StftConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = StftConfig::default();
    let layout = BandLayout::for_stft(&cfg, PIPELINE_RATE_HZ)?;
    let speech = synth_speech(4.0, 10)?;
    let noise = synth_noise(NoiseKind::Ssn, 8.0, 11)?;
    let clean = band_envelope(&stft_analyze(&speech, &cfg)?, &layout)?;
    println!("{:>6} {:>8} {:>8}", "snr", "approx", "extended");
    for snr in [-10.0, -5.0, 0.0, 5.0, 10.0, 20.0] {
        let m = mix_at_snr(&speech, &noise, snr, 12)?;
        let noisy = band_envelope(&stft_analyze(&m.noisy, &cfg)?, &layout)?;
        let a = approximate_stoi(&clean, &noisy, 30)?;
        let e = extended_stoi_with_clipping(&clean, &noisy, 30)?;
        println!("{snr:>6.1} {:>8.4} {:>8.4}", a.d, e.d);
    }
    Ok(())
}
