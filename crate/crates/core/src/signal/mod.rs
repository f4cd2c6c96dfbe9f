//! Audio ingestion and emission, synthetic speech and noise, SNR mixing.
//!
//! Everything here is a pure function of its arguments; randomness always
//! comes from an explicit seed.

mod corpus;
mod level;
mod synth;
mod wav;

pub use corpus::{CorpusItem, CorpusSpec, NoiseKind};
pub use level::{active_speech_level, mix_at_snr, mix_segment_at_snr, Mixture};
pub use synth::{speech_modulation_envelope, synth_noise, synth_speech};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// Sample rate every pipeline input must have.
pub const PIPELINE_RATE_HZ: u32 = 10_000;

/// Mono audio with finite samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform must contain at least one sample"));
        }
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Waveform at the pipeline rate.
    pub fn at_pipeline_rate(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, PIPELINE_RATE_HZ)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Rejects anything not sampled at 10 kHz; there is no resampler.
    pub fn ensure_pipeline_rate(&self) -> Result<()> {
        if self.sample_rate_hz != PIPELINE_RATE_HZ {
            return Err(Error::invalid(format!(
                "sample rate {} Hz not supported, expected {} Hz",
                self.sample_rate_hz, PIPELINE_RATE_HZ
            )));
        }
        Ok(())
    }

    /// Copy of `len` samples starting at `start`.
    pub fn segment(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.samples.len() {
            return Err(Error::invalid(format!(
                "segment [{start}, {}) outside waveform of length {}",
                start + len,
                self.samples.len()
            )));
        }
        Ok(Self {
            samples: self.samples[start..start + len].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    pub(crate) fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

pub(crate) fn sample_count(duration_s: f64) -> Result<usize> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::invalid(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    Ok(((duration_s * f64::from(PIPELINE_RATE_HZ)).round() as usize).max(1))
}
