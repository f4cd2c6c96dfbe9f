//! Prints the one-third octave band layout of the 256-point STFT at 10 kHz.
//!
//! cargo run --example band_table

use stoi_mse::bands::BandLayout;
use stoi_mse::signal::PIPELINE_RATE_HZ;
use stoi_mse::stft::StftConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let layout = BandLayout::for_stft(&StftConfig::default(), PIPELINE_RATE_HZ)?;
    println!("{:>3} {:>10} {:>10} {:>10} {:>4} {:>4}", "j", "lower", "center", "upper", "k1", "k2");
    for b in layout.bands() {
        println!(
            "{:>3} {:>10.2} {:>10.2} {:>10.2} {:>4} {:>4}",
            b.j, b.lower_hz, b.center_hz, b.upper_hz, b.k1, b.k2
        );
    }
    Ok(())
}
