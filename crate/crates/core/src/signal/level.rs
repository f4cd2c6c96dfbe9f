use rand::Rng;

use super::Waveform;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

/// Frame length of the level gate, 25.6 ms.
const GATE_FRAME_S: f64 = 0.0256;
/// Frames more than this far below the loudest frame are treated as inactive.
const GATE_RANGE_DB: f64 = 40.0;

/// Active speech level in dB relative to full scale.
///
/// Simplified frame gate: non-overlapping 25.6 ms frames, keep frames whose
/// RMS is within 40 dB of the loudest one, return the RMS level over the
/// kept frames. A trailing partial frame is ignored unless the signal is
/// shorter than one frame.
pub fn active_speech_level(x: &Waveform) -> Result<f64> {
    let frame = ((GATE_FRAME_S * f64::from(x.sample_rate_hz())).round() as usize).max(1);
    let s = x.samples();
    let frames: Vec<&[f64]> = if s.len() < frame {
        vec![s]
    } else {
        s.chunks_exact(frame).collect()
    };
    let ms: Vec<f64> = frames
        .iter()
        .map(|f| {
            let r = stats::rms(f);
            r * r
        })
        .collect();
    let max_ms = ms.iter().cloned().fold(0.0, f64::max);
    if max_ms <= 0.0 {
        return Err(Error::NoActiveSpeech);
    }
    let threshold = max_ms * 10f64.powf(-GATE_RANGE_DB / 10.0);
    let active: Vec<f64> = ms.into_iter().filter(|&v| v > 0.0 && v >= threshold).collect();
    Ok(10.0 * stats::mean(&active).log10())
}

/// Result of mixing clean speech with a scaled noise segment.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub noisy: Waveform,
    pub noise: Waveform,
    /// Start of the noise segment within the source noise signal.
    pub offset: usize,
}

/// Scales an equal-length noise segment to the requested SNR and adds it.
///
/// SNR is the active speech level of `x` minus the RMS level of the scaled
/// noise, both in dB.
pub fn mix_segment_at_snr(x: &Waveform, v: &Waveform, snr_db: f64) -> Result<(Waveform, Waveform)> {
    if x.sample_rate_hz() != v.sample_rate_hz() {
        return Err(Error::invalid("speech and noise sample rates differ"));
    }
    if x.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: v.len(),
        });
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    let noise_rms = stats::rms(v.samples());
    if noise_rms <= 0.0 {
        return Err(Error::invalid("noise segment is all zero"));
    }
    let speech_db = active_speech_level(x)?;
    let target_rms = 10f64.powf((speech_db - snr_db) / 20.0);
    let scaled = v.scaled(target_rms / noise_rms);
    let y: Vec<f64> = x
        .samples()
        .iter()
        .zip(scaled.samples())
        .map(|(a, b)| a + b)
        .collect();
    Ok((Waveform::new(y, x.sample_rate_hz())?, scaled))
}

/// Mixes `x` with a randomly placed segment of `v` at the given SNR.
///
/// The segment offset is uniform over all positions where a `len(x)` segment
/// fits inside `v`.
pub fn mix_at_snr(x: &Waveform, v: &Waveform, snr_db: f64, seed: u64) -> Result<Mixture> {
    if v.len() < x.len() {
        return Err(Error::invalid(format!(
            "noise ({} samples) shorter than speech ({} samples)",
            v.len(),
            x.len()
        )));
    }
    if stats::rms(v.samples()) <= 0.0 {
        return Err(Error::invalid("noise is all zero"));
    }
    let mut rng = seed::rng(seed::derive(seed, 0x004d_4958));
    let offset = rng.random_range(0..=v.len() - x.len());
    let segment = v.segment(offset, x.len())?;
    let (noisy, noise) = mix_segment_at_snr(x, &segment, snr_db)?;
    Ok(Mixture {
        noisy,
        noise,
        offset,
    })
}
