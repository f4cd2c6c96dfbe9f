//! Surrogate speech and noise generators.
//!
//! The speech surrogate is a source-filter model: a pitch-drifting pulse
//! train through three time-varying formant resonators, amplitude-modulated
//! by a syllable-rate envelope. Noise surrogates are shaped Gaussian noise
//! with optional modulation, transients, hum and distant talkers.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};

use super::{sample_count, NoiseKind, Waveform, PIPELINE_RATE_HZ};
use crate::error::Result;
use crate::seed;
use crate::stats;

const FS: f64 = PIPELINE_RATE_HZ as f64;
const PEAK: f64 = 0.5;
const NOISE_RMS: f64 = 0.1;

/// Syllable-rate amplitude envelope used by [`synth_speech`], in [0, 1].
///
/// A sum of five sinusoids with rates in 2-8 Hz, normalized to unit peak,
/// shifted to [0, 1] and squared to produce near-silent valleys.
pub fn speech_modulation_envelope(duration_s: f64, seed: u64) -> Result<Vec<f64>> {
    let n = sample_count(duration_s)?;
    let mut rng = seed::rng(seed::derive(seed, 1));
    let comps: Vec<(f64, f64, f64)> = (0..5)
        .map(|_| {
            (
                rng.random_range(2.0..8.0),
                rng.random_range(0.5..1.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let m: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            comps
                .iter()
                .map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin())
                .sum()
        })
        .collect();
    let peak = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-12);
    Ok(m.iter()
        .map(|v| {
            let u = 0.5 * (1.0 + v / peak);
            u * u
        })
        .collect())
}

/// Two-pole resonator with unity gain at DC.
#[derive(Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq_hz: f64, bw_hz: f64) -> f64 {
        let r = (-PI * bw_hz / FS).exp();
        let a1 = 2.0 * r * (2.0 * PI * freq_hz / FS).cos();
        let a2 = r * r;
        let y = (1.0 - a1 + a2) * x + a1 * self.y1 - a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Piecewise-linear formant track with random targets at syllable-like intervals.
fn formant_track(n: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let ranges = [(300.0, 850.0), (900.0, 2300.0), (2400.0, 3300.0)];
    let draw = |rng: &mut dyn rand::RngCore| -> [f64; 3] {
        let mut f = [0.0; 3];
        for (slot, (lo, hi)) in f.iter_mut().zip(ranges) {
            *slot = lo + (hi - lo) * rng.random::<f64>();
        }
        f
    };
    let mut track = Vec::with_capacity(n);
    let mut from = draw(rng);
    while track.len() < n {
        let seg = ((rng.random_range(0.08..0.25) * FS) as usize).max(1);
        let to = draw(rng);
        for i in 0..seg.min(n - track.len()) {
            let w = i as f64 / seg as f64;
            let mut f = [0.0; 3];
            for k in 0..3 {
                f[k] = from[k] + w * (to[k] - from[k]);
            }
            track.push(f);
        }
        from = to;
    }
    track
}

/// Deterministic speech-like signal at 10 kHz, peak-normalized to 0.5.
pub fn synth_speech(duration_s: f64, seed: u64) -> Result<Waveform> {
    let n = sample_count(duration_s)?;
    let env = speech_modulation_envelope(duration_s, seed)?;

    let mut prng = seed::rng(seed::derive(seed, 2));
    let base = prng.random_range(95.0..210.0);
    let (slow_f, slow_p) = (prng.random_range(0.2..0.6), prng.random_range(0.0..2.0 * PI));
    let (fast_f, fast_p) = (prng.random_range(2.0..4.0), prng.random_range(0.0..2.0 * PI));

    let mut frng = seed::rng(seed::derive(seed, 3));
    let formants = formant_track(n, &mut frng);
    let mut nrng = seed::rng(seed::derive(seed, 4));

    let bandwidths = [80.0, 110.0, 160.0];
    let mut res = [Resonator::default(), Resonator::default(), Resonator::default()];
    let mut phase = prng.random::<f64>();
    let mut glottal = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / FS;
        let f0 = (base
            * (1.0
                + 0.12 * (2.0 * PI * slow_f * t + slow_p).sin()
                + 0.05 * (2.0 * PI * fast_f * t + fast_p).sin()))
        .clamp(80.0, 250.0);
        phase += f0 / FS;
        let pulse = if phase >= 1.0 {
            phase -= 1.0;
            1.0
        } else {
            0.0
        };
        glottal = pulse + 0.9 * glottal;
        let aspiration: f64 = nrng.sample(StandardNormal);
        let mut s = glottal + 0.05 * aspiration;
        for k in 0..3 {
            s = res[k].step(s, formants[i][k], bandwidths[k]);
        }
        out.push(env[i] * s);
    }
    let mut out = equalize_to_speech_shape(&out);
    let peak = out.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    Waveform::at_pipeline_rate(out)
}

/// Lowest frequency the long-term equalizer shapes; below it the output
/// rolls off at 24 dB/octave.
const EQ_FLOOR_HZ: f64 = 100.0;
const EQ_MAX_BOOST_DB: f64 = 40.0;

/// Reshapes the long-term spectrum of `x` toward the speech-shaped response
/// used for SSN. Three cascaded resonators alone roll off far too steeply
/// above the third formant. The correction is the ratio of the target to the
/// 1/3-octave smoothed power spectrum, so it is smooth in frequency and
/// leaves the temporal envelope intact.
fn equalize_to_speech_shape(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let power: Vec<f64> = buf[..=half].iter().map(|c| c.norm_sqr()).collect();
    let mut prefix = vec![0.0; power.len() + 1];
    for (k, p) in power.iter().enumerate() {
        prefix[k + 1] = prefix[k] + p;
    }
    let df = FS / n as f64;
    let edge = 2f64.powf(1.0 / 6.0);
    let smoothed = |f: f64| {
        let lo = ((f / edge / df).floor() as usize).min(half);
        let hi = ((f * edge / df).ceil() as usize).clamp(lo, half);
        (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
    };
    let gains: Vec<f64> = (0..=half)
        .map(|k| {
            let f = k as f64 * df;
            let p = smoothed(f.max(EQ_FLOOR_HZ));
            if p > 0.0 {
                speech_shaped_response(f) / p.sqrt()
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let floor_bin = (EQ_FLOOR_HZ / df).ceil() as usize;
    let floor = gains[floor_bin.min(half)..].iter().cloned().fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return x.to_vec();
    }
    let cap = floor * 10f64.powf(EQ_MAX_BOOST_DB / 20.0);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = if k <= half { k } else { n - k };
        // speech carries next to nothing below the lowest pitch
        let rolloff = (bin as f64 * df / EQ_FLOOR_HZ).min(1.0).powi(4);
        *c *= gains[bin].min(cap) / floor * rolloff;
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Applies a zero-phase magnitude response `h(f)` to `x` via one full-length DFT.
fn shape_spectrum(x: &[f64], h: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = if k <= n / 2 { k } else { n - k };
        *c *= h(bin as f64 * FS / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn white(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let r = stats::rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
}

/// Flat to 500 Hz, -6 dB/octave above.
fn speech_shaped_response(f: f64) -> f64 {
    if f <= 500.0 {
        1.0
    } else {
        500.0 / f
    }
}

struct Transients {
    per_second: f64,
    decay_ms: f64,
    bright: bool,
}

/// Parameters of the colored/modulated noise surrogates.
struct Preset {
    corner_hz: f64,
    slope_db_per_oct: f64,
    am_rate_hz: f64,
    am_depth: f64,
    hum: Option<(f64, usize, f64)>,
    transients: Option<Transients>,
    talkers: usize,
    talker_level: f64,
}

fn preset(kind: NoiseKind) -> Option<Preset> {
    let p = match kind {
        NoiseKind::Ssn | NoiseKind::Bbl => return None,
        // traffic: dark rumble, slow swells, passing vehicles
        NoiseKind::Str => Preset {
            corner_hz: 150.0,
            slope_db_per_oct: -5.0,
            am_rate_hz: 0.2,
            am_depth: 0.5,
            hum: None,
            transients: Some(Transients { per_second: 0.7, decay_ms: 300.0, bright: false }),
            talkers: 0,
            talker_level: 0.0,
        },
        // cafeteria: background talkers plus cutlery clatter
        NoiseKind::Caf => Preset {
            corner_hz: 300.0,
            slope_db_per_oct: -4.0,
            am_rate_hz: 0.8,
            am_depth: 0.2,
            hum: None,
            transients: Some(Transients { per_second: 4.0, decay_ms: 15.0, bright: true }),
            talkers: 4,
            talker_level: 0.8,
        },
        // bus: engine hum and low-frequency rumble
        NoiseKind::Bus => Preset {
            corner_hz: 100.0,
            slope_db_per_oct: -8.0,
            am_rate_hz: 0.08,
            am_depth: 0.3,
            hum: Some((55.0, 8, 0.5)),
            transients: Some(Transients { per_second: 0.3, decay_ms: 200.0, bright: false }),
            talkers: 1,
            talker_level: 0.3,
        },
        // pedestrian area: footsteps and a couple of passers-by
        NoiseKind::Ped => Preset {
            corner_hz: 250.0,
            slope_db_per_oct: -5.0,
            am_rate_hz: 0.4,
            am_depth: 0.35,
            hum: None,
            transients: Some(Transients { per_second: 2.0, decay_ms: 40.0, bright: false }),
            talkers: 2,
            talker_level: 0.6,
        },
    };
    Some(p)
}

fn talker_sum(count: usize, duration_s: f64, seed: u64) -> Result<Vec<f64>> {
    let n = sample_count(duration_s)?;
    let mut acc = vec![0.0; n];
    for k in 0..count {
        let s = synth_speech(duration_s, seed::derive(seed, 100 + k as u64))?;
        acc.iter_mut().zip(s.samples()).for_each(|(a, b)| *a += b);
    }
    Ok(acc)
}

fn render_preset(p: &Preset, duration_s: f64, seed: u64) -> Result<Vec<f64>> {
    let n = sample_count(duration_s)?;
    let mut rng = seed::rng(seed::derive(seed, 10));
    let exponent = p.slope_db_per_oct / (20.0 * 2f64.log10());
    let corner = p.corner_hz;
    let mut x = shape_spectrum(&white(n, &mut rng), |f| {
        if f <= corner {
            1.0
        } else {
            (f / corner).powf(exponent)
        }
    });
    normalize_rms(&mut x, 1.0);

    let am_phase = rng.random_range(0.0..2.0 * PI);
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / FS;
        *v *= 1.0 + p.am_depth * (2.0 * PI * p.am_rate_hz * t + am_phase).sin();
    }

    if let Some((f0, harmonics, level)) = p.hum {
        let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / FS;
            *v += phases
                .iter()
                .enumerate()
                .map(|(h, ph)| {
                    let k = (h + 1) as f64;
                    level / k * (2.0 * PI * k * f0 * t + ph).sin()
                })
                .sum::<f64>();
        }
    }

    if let Some(tr) = &p.transients {
        let gaps = Exp::new(tr.per_second).expect("positive rate");
        let decay = (tr.decay_ms * 1e-3 * FS).max(1.0);
        let burst_len = (decay * 5.0) as usize;
        let mut t = gaps.sample(&mut rng);
        while ((t * FS) as usize) < n {
            let start = (t * FS) as usize;
            let amp = rng.random_range(1.0..3.0);
            let mut lp = 0.0;
            let mut prev = 0.0;
            for i in 0..burst_len.min(n - start) {
                let e: f64 = rng.sample(StandardNormal);
                let shaped = if tr.bright {
                    let d = e - prev;
                    prev = e;
                    d
                } else {
                    lp = 0.97 * lp + 0.03 * e;
                    lp * 8.0
                };
                x[start + i] += amp * (-(i as f64) / decay).exp() * shaped;
            }
            t += gaps.sample(&mut rng);
        }
    }

    if p.talkers > 0 {
        let mut talk = talker_sum(p.talkers, duration_s, seed::derive(seed, 11))?;
        normalize_rms(&mut talk, p.talker_level);
        x.iter_mut().zip(&talk).for_each(|(a, b)| *a += b);
    }
    Ok(x)
}

/// Deterministic noise of the given kind, RMS-normalized to 0.1.
///
/// SSN is white Gaussian noise through a speech-shaped response (flat to
/// 500 Hz, -6 dB/octave above); BBL sums six independent speech surrogates;
/// the remaining kinds are documented colored/modulated presets standing in
/// for recorded street, cafeteria, bus and pedestrian scenes.
pub fn synth_noise(kind: NoiseKind, duration_s: f64, seed: u64) -> Result<Waveform> {
    let n = sample_count(duration_s)?;
    let seed = seed::derive(seed, kind as u64 + 1000);
    let mut x = match kind {
        NoiseKind::Ssn => {
            let mut rng = seed::rng(seed);
            shape_spectrum(&white(n, &mut rng), speech_shaped_response)
        }
        NoiseKind::Bbl => talker_sum(6, duration_s, seed)?,
        other => render_preset(&preset(other).expect("preset exists"), duration_s, seed)?,
    };
    normalize_rms(&mut x, NOISE_RMS);
    Waveform::at_pipeline_rate(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speech_is_deterministic_and_sized() {
        let a = synth_speech(2.0, 42).unwrap();
        let b = synth_speech(2.0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20_000);
        let peak = a.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
        assert_ne!(a, synth_speech(2.0, 43).unwrap());
    }

    #[test]
    fn every_noise_kind_is_deterministic_and_finite() {
        for kind in NoiseKind::ALL {
            let a = synth_noise(kind, 1.0, 9).unwrap();
            let b = synth_noise(kind, 1.0, 9).unwrap();
            assert_eq!(a, b, "{kind:?}");
            assert!((stats::rms(a.samples()) - NOISE_RMS).abs() < 1e-9);
        }
    }

    #[test]
    fn non_positive_duration_is_rejected() {
        assert!(synth_speech(0.0, 1).is_err());
        assert!(synth_noise(NoiseKind::Ssn, -1.0, 1).is_err());
    }
}
