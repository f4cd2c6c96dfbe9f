//! Speech enhancement toolkit comparing two training criteria: envelope
//! linear correlation (an approximation of STOI) and short-time spectral
//! amplitude mean squared error.
//!
//! The crate covers the whole chain: synthetic corpora and WAV I/O, STFT
//! analysis and synthesis, one-third octave band envelopes, correlation and
//! STOI scoring, both costs with analytic gradients, the Bayesian estimators
//! behind them, per-band neural gain estimators, and an experiment harness.

pub mod bands;
pub mod costs;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod intelligibility;
pub mod neural;
pub mod seed;
pub mod signal;
pub mod stats;
pub mod stft;

pub use error::{Error, Result, StageExt};
