//! Mixes synthetic speech with each noise type at a target SNR and checks
//! the realized level difference.
//!
//! cargo run --release --example mix -- [snr_db]

use stoi_mse::signal::{active_speech_level, mix_at_snr, synth_noise, synth_speech, NoiseKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let snr: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let speech = synth_speech(3.0, 1)?;
    let speech_level = active_speech_level(&speech)?;
    for kind in NoiseKind::ALL {
        let noise = synth_noise(kind, 6.0, 2)?;
        let m = mix_at_snr(&speech, &noise, snr, 3)?;
        let noise_rms = stoi_mse::stats::rms(m.noise.samples());
        println!(
            "{:<4} offset {:>6}  realized snr {:+.3} dB",
            kind.label(),
            m.offset,
            speech_level - 20.0 * noise_rms.log10()
        );
    }
    Ok(())
}
