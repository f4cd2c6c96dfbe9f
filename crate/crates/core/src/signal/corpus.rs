use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{mix_at_snr, synth_noise, synth_speech, Waveform, PIPELINE_RATE_HZ};
use crate::error::{Error, Result};
use crate::seed;

/// Noise conditions. The four scene noises are labeled surrogates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoiseKind {
    #[serde(rename = "SSN")]
    Ssn = 0,
    #[serde(rename = "BBL")]
    Bbl = 1,
    #[serde(rename = "STR-surrogate")]
    Str = 2,
    #[serde(rename = "CAF-surrogate")]
    Caf = 3,
    #[serde(rename = "BUS-surrogate")]
    Bus = 4,
    #[serde(rename = "PED-surrogate")]
    Ped = 5,
}

impl NoiseKind {
    /// All kinds, in table order.
    pub const ALL: [NoiseKind; 6] = [
        NoiseKind::Ssn,
        NoiseKind::Bbl,
        NoiseKind::Caf,
        NoiseKind::Str,
        NoiseKind::Ped,
        NoiseKind::Bus,
    ];

    /// Kinds seen during training.
    pub const MATCHED: [NoiseKind; 4] = [NoiseKind::Ssn, NoiseKind::Bbl, NoiseKind::Caf, NoiseKind::Str];

    /// Kinds held out of training and validation.
    pub const UNMATCHED: [NoiseKind; 2] = [NoiseKind::Bus, NoiseKind::Ped];

    pub fn is_matched(self) -> bool {
        Self::MATCHED.contains(&self)
    }

    /// Short table label.
    pub fn label(self) -> &'static str {
        match self {
            NoiseKind::Ssn => "SSN",
            NoiseKind::Bbl => "BBL",
            NoiseKind::Str => "STR",
            NoiseKind::Caf => "CAF",
            NoiseKind::Bus => "BUS",
            NoiseKind::Ped => "PED",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase();
        let key = key.strip_suffix("-SURROGATE").unwrap_or(&key);
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.label() == key)
            .ok_or_else(|| Error::invalid(format!("unknown noise kind {s:?}")))
    }
}

/// Declarative description of a synthetic noisy corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub num_utterances: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub noise_kind: NoiseKind,
    pub snr_db_lo: f64,
    pub snr_db_hi: f64,
}

/// One generated utterance.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub clean: Waveform,
    pub noise: Waveform,
    pub noisy: Waveform,
    pub snr_db: f64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_utterances == 0 {
            return Err(Error::invalid("num_utterances must be positive"));
        }
        if self.duration_s.is_nan() || self.duration_s <= 0.0 {
            return Err(Error::invalid("duration_s must be positive"));
        }
        if self.snr_db_lo.is_nan() || self.snr_db_hi.is_nan() || self.snr_db_lo > self.snr_db_hi {
            return Err(Error::invalid(format!(
                "empty SNR range [{}, {}]",
                self.snr_db_lo, self.snr_db_hi
            )));
        }
        Ok(())
    }

    /// Also checks that utterances span at least 1.5 envelope windows of
    /// `envelope_len` frames at a 128-sample hop.
    pub fn validate_for(&self, envelope_len: usize) -> Result<()> {
        self.validate()?;
        let span_s = envelope_len as f64 * 128.0 / f64::from(PIPELINE_RATE_HZ);
        if self.duration_s < 1.5 * span_s {
            return Err(Error::invalid(format!(
                "duration {} s shorter than 1.5 x envelope span ({span_s} s)",
                self.duration_s
            )));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Generates every utterance: clean speech, a noise segment from a
    /// twice-as-long noise realization, and the mixture at an SNR drawn
    /// uniformly from the configured range.
    pub fn generate(&self) -> Result<Vec<CorpusItem>> {
        self.validate()?;
        let mut snr_rng = seed::rng(seed::derive_str(self.seed, "snr"));
        (0..self.num_utterances)
            .map(|i| {
                let unit = seed::derive(self.seed, i as u64);
                let clean = synth_speech(self.duration_s, seed::derive_str(unit, "speech"))?;
                let noise_src =
                    synth_noise(self.noise_kind, 2.0 * self.duration_s, seed::derive_str(unit, "noise"))?;
                let snr_db = if self.snr_db_hi > self.snr_db_lo {
                    snr_rng.random_range(self.snr_db_lo..=self.snr_db_hi)
                } else {
                    self.snr_db_lo
                };
                let mix = mix_at_snr(&clean, &noise_src, snr_db, seed::derive_str(unit, "mix"))?;
                Ok(CorpusItem {
                    clean,
                    noise: mix.noise,
                    noisy: mix.noisy,
                    snr_db,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keys_are_exact() {
        let spec = CorpusSpec {
            num_utterances: 3,
            duration_s: 2.0,
            seed: 7,
            noise_kind: NoiseKind::Caf,
            snr_db_lo: -5.0,
            snr_db_hi: 10.0,
        };
        let v: serde_json::Value = serde_json::from_str(&spec.to_json().unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["duration_s", "noise_kind", "num_utterances", "seed", "snr_db_hi", "snr_db_lo"]
        );
        assert_eq!(v["noise_kind"], "CAF-surrogate");
        assert_eq!(CorpusSpec::from_json(&spec.to_json().unwrap()).unwrap(), spec);
    }

    #[test]
    fn inverted_snr_range_is_rejected() {
        let json = r#"{"num_utterances":1,"duration_s":1.0,"seed":0,"noise_kind":"SSN","snr_db_lo":5,"snr_db_hi":0}"#;
        assert!(CorpusSpec::from_json(json).is_err());
    }

    #[test]
    fn short_utterances_fail_envelope_span_check() {
        let spec = CorpusSpec {
            num_utterances: 1,
            duration_s: 0.5,
            seed: 0,
            noise_kind: NoiseKind::Ssn,
            snr_db_lo: 0.0,
            snr_db_hi: 0.0,
        };
        assert!(spec.validate_for(30).is_err());
        assert!(spec.validate_for(4).is_ok());
    }

    #[test]
    fn noise_kind_parsing() {
        assert_eq!("bbl".parse::<NoiseKind>().unwrap(), NoiseKind::Bbl);
        assert_eq!("PED-surrogate".parse::<NoiseKind>().unwrap(), NoiseKind::Ped);
        assert!("pink".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn generation_respects_snr_range() {
        let spec = CorpusSpec {
            num_utterances: 3,
            duration_s: 1.0,
            seed: 1,
            noise_kind: NoiseKind::Str,
            snr_db_lo: -5.0,
            snr_db_hi: 10.0,
        };
        let items = spec.generate().unwrap();
        assert_eq!(items.len(), 3);
        for it in &items {
            assert!((-5.0..=10.0).contains(&it.snr_db));
            assert_eq!(it.noisy.len(), it.clean.len());
        }
    }
}
