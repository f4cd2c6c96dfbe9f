//! Generates a small noisy corpus and writes it as WAV files.
//!
//! cargo run --release --example synth_corpus -- [out_dir]

use stoi_mse::signal::{active_speech_level, write_wav, CorpusSpec, NoiseKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "corpus_demo".into());
    std::fs::create_dir_all(&out)?;
    for kind in NoiseKind::ALL {
        let spec = CorpusSpec {
            num_utterances: 2,
            duration_s: 3.0,
            seed: 7,
            noise_kind: kind,
            snr_db_lo: 0.0,
            snr_db_hi: 5.0,
        };
        for (i, item) in spec.generate()?.iter().enumerate() {
            let stem = format!("{out}/{}_{i}", kind.label());
            write_wav(&item.clean, format!("{stem}_clean.wav"))?;
            write_wav(&item.noisy, format!("{stem}_noisy.wav"))?;
            println!(
                "{stem}: snr {:.2} dB, speech level {:.1} dB",
                item.snr_db,
                active_speech_level(&item.clean)?
            );
        }
    }
    Ok(())
}
