//! Short-time Fourier analysis and overlap-add synthesis.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Window sums at or below this are treated as zero during synthesis.
const WINDOW_SUM_FLOOR: f64 = 1e-8;
const DUMP_MAGIC: &[u8; 8] = b"STFTSPEC";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WindowKind {
    /// Periodic Hann, `0.5 * (1 - cos(2 pi n / L))`.
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub window_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 256,
            window_len: 256,
            hop: 128,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || self.window_len == 0 || self.hop == 0 {
            return Err(Error::invalid("STFT sizes must be positive"));
        }
        if self.window_len > self.fft_size {
            return Err(Error::invalid("window longer than FFT size"));
        }
        if !self.window_len.is_multiple_of(self.hop) {
            return Err(Error::invalid("hop must divide the window length"));
        }
        Ok(())
    }

    /// Number of single-sided bins, `K/2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window(&self) -> Vec<f64> {
        let l = self.window_len as f64;
        match self.window {
            WindowKind::Hann => (0..self.window_len)
                .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / l).cos()))
                .collect(),
        }
    }

    /// Frames produced for a signal of `len` samples (no padding).
    pub fn frame_count(&self, len: usize) -> Result<usize> {
        if len < self.window_len {
            return Err(Error::invalid(format!(
                "signal of {len} samples shorter than one window ({})",
                self.window_len
            )));
        }
        Ok((len - self.window_len) / self.hop + 1)
    }

    /// Bin center frequency in Hz.
    pub fn bin_hz(&self, k: usize, sample_rate_hz: u32) -> f64 {
        k as f64 * f64::from(sample_rate_hz) / self.fft_size as f64
    }
}

/// Single-sided complex STFT, stored frames x bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    coeffs: Array2<Complex64>,
    config: StftConfig,
    sample_rate_hz: u32,
}

impl Spectrogram {
    pub fn from_coeffs(coeffs: Array2<Complex64>, config: StftConfig, sample_rate_hz: u32) -> Result<Self> {
        config.validate()?;
        if coeffs.ncols() != config.bins() {
            return Err(Error::DimensionMismatch {
                expected: config.bins(),
                got: coeffs.ncols(),
            });
        }
        if coeffs.nrows() == 0 {
            return Err(Error::invalid("spectrogram needs at least one frame"));
        }
        Ok(Self {
            coeffs,
            config,
            sample_rate_hz,
        })
    }

    pub fn frames(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn bins(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn coeffs(&self) -> &Array2<Complex64> {
        &self.coeffs
    }

    /// Magnitudes, frames x bins.
    pub fn magnitudes(&self) -> Array2<f64> {
        self.coeffs.mapv(|c| c.norm())
    }

    pub fn phases(&self) -> Array2<f64> {
        self.coeffs.mapv(|c| c.arg())
    }

    /// Length of the signal an OLA synthesis of these frames spans.
    pub fn signal_len(&self) -> usize {
        (self.frames() - 1) * self.config.hop + self.config.window_len
    }

    /// Writes a debugging dump: magic, five little-endian u64 (frames, bins,
    /// fft size, window length, hop), a u32 sample rate, then interleaved
    /// re/im little-endian f64 in frame-major order.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(DUMP_MAGIC)?;
        for v in [
            self.frames(),
            self.bins(),
            self.config.fft_size,
            self.config.window_len,
            self.config.hop,
        ] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.sample_rate_hz.to_le_bytes())?;
        for c in self.coeffs.iter() {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_dump(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::format("not a spectrogram dump"));
        }
        let mut dims = [0usize; 5];
        let mut buf8 = [0u8; 8];
        for d in &mut dims {
            r.read_exact(&mut buf8)?;
            *d = usize::try_from(u64::from_le_bytes(buf8)).map_err(|_| Error::format("dimension overflow"))?;
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4)?;
        let sample_rate_hz = u32::from_le_bytes(buf4);
        let [frames, bins, fft_size, window_len, hop] = dims;
        let config = StftConfig {
            fft_size,
            window_len,
            hop,
            window: WindowKind::Hann,
        };
        let count = frames
            .checked_mul(bins)
            .ok_or_else(|| Error::format("dimension overflow"))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf8)?;
            let re = f64::from_le_bytes(buf8);
            r.read_exact(&mut buf8)?;
            let im = f64::from_le_bytes(buf8);
            data.push(Complex64::new(re, im));
        }
        let coeffs = Array2::from_shape_vec((frames, bins), data).map_err(|e| Error::format(e.to_string()))?;
        Self::from_coeffs(coeffs, config, sample_rate_hz)
    }
}

/// Frame `m` covers samples `[m*hop, m*hop + window_len)`, windowed and
/// zero-padded to the FFT size.
pub fn stft_analyze(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let frames = cfg.frame_count(w.len())?;
    let bins = cfg.bins();
    let win = cfg.window();
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let x = w.samples();
    let mut coeffs = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for m in 0..frames {
        let start = m * cfg.hop;
        buf.fill(Complex64::new(0.0, 0.0));
        for (n, (b, wv)) in buf.iter_mut().zip(&win).enumerate() {
            b.re = x[start + n] * wv;
        }
        fft.process(&mut buf);
        for (dst, src) in coeffs.row_mut(m).iter_mut().zip(&buf[..bins]) {
            *dst = *src;
        }
    }
    Spectrogram::from_coeffs(coeffs, *cfg, w.sample_rate_hz())
}

/// Inverse DFT per frame, rectangular overlap-add, division by the summed
/// analysis window.
pub fn stft_synthesize(s: &Spectrogram) -> Result<Waveform> {
    let cfg = s.config;
    let k = cfg.fft_size;
    let ifft = FftPlanner::new().plan_fft_inverse(k);
    let win = cfg.window();
    let len = s.signal_len();
    let mut out = vec![0.0; len];
    let mut wsum = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    for (m, row) in s.coeffs.rows().into_iter().enumerate() {
        // rebuild the Hermitian-symmetric full spectrum
        for (i, c) in row.iter().enumerate() {
            buf[i] = *c;
        }
        for i in 1..k.div_ceil(2) {
            buf[k - i] = row[i].conj();
        }
        buf[0].im = 0.0;
        if k.is_multiple_of(2) {
            buf[k / 2].im = 0.0;
        }
        ifft.process(&mut buf);
        let start = m * cfg.hop;
        for n in 0..cfg.window_len {
            out[start + n] += buf[n].re / k as f64;
            wsum[start + n] += win[n];
        }
    }
    for (o, ws) in out.iter_mut().zip(&wsum) {
        *o = if *ws > WINDOW_SUM_FLOOR { *o / ws } else { 0.0 };
    }
    Waveform::new(out, s.sample_rate_hz)
}

/// Scales every coefficient by its gain, keeping the noisy phase.
pub fn apply_gain_with_noisy_phase(noisy: &Spectrogram, gains: &Array2<f64>) -> Result<Spectrogram> {
    if gains.dim() != noisy.coeffs.dim() {
        let (f, b) = gains.dim();
        return Err(Error::DimensionMismatch {
            expected: noisy.frames() * noisy.bins(),
            got: f * b,
        });
    }
    if let Some(g) = gains.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::invalid(format!("gain {g} outside [0, 1]")));
    }
    let mut coeffs = noisy.coeffs.clone();
    coeffs.zip_mut_with(gains, |c, &g| *c *= g);
    Ok(Spectrogram {
        coeffs,
        config: noisy.config,
        sample_rate_hz: noisy.sample_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::seed;

    fn noise(n: usize, s: u64) -> Waveform {
        let mut rng = seed::rng(s);
        Waveform::at_pipeline_rate((0..n).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
    }

    fn interior_max_err(a: &[f64], b: &[f64], edge: usize) -> f64 {
        a[edge..a.len() - edge]
            .iter()
            .zip(&b[edge..b.len() - edge])
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn frame_count_arithmetic() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.frame_count(384).unwrap(), 2);
        assert_eq!(cfg.frame_count(256).unwrap(), 1);
        assert!(cfg.frame_count(255).is_err());
        assert!(stft_analyze(&noise(100, 1), &cfg).is_err());
    }

    #[test]
    fn dc_energy_stays_in_the_two_lowest_bins() {
        // periodic Hann transforms to L/2 at DC and -L/4 at the first bin
        let w = Waveform::at_pipeline_rate(vec![1.0; 1024]).unwrap();
        let s = stft_analyze(&w, &StftConfig::default()).unwrap();
        let mag = s.magnitudes();
        for row in mag.rows() {
            assert!((row[0] - 128.0).abs() < 1e-10);
            assert!((row[1] - 64.0).abs() < 1e-10);
            assert!(row.iter().skip(2).all(|v| v.abs() < 1e-10 * 128.0));
        }
    }

    #[test]
    fn bin_centered_sinusoid_has_a_three_bin_main_lobe() {
        let c = 20;
        let f = 39.0625 * c as f64;
        let w = Waveform::at_pipeline_rate(
            (0..2048)
                .map(|n| (2.0 * PI * f * n as f64 / 10_000.0).cos())
                .collect(),
        )
        .unwrap();
        let mag = stft_analyze(&w, &StftConfig::default()).unwrap().magnitudes();
        for row in mag.rows() {
            assert!((row[c] - 64.0).abs() < 1e-9);
            assert!((row[c - 1] - 32.0).abs() < 1e-9);
            assert!((row[c + 1] - 32.0).abs() < 1e-9);
            for (k, v) in row.iter().enumerate() {
                if k + 1 < c || k > c + 1 {
                    assert!(*v < 1e-9, "bin {k}: {v}");
                }
            }
        }
    }

    #[test]
    fn white_noise_round_trip() {
        let w = noise(5000, 3);
        let cfg = StftConfig::default();
        let y = stft_synthesize(&stft_analyze(&w, &cfg).unwrap()).unwrap();
        let scale = w.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(interior_max_err(&w.samples()[..y.len()], y.samples(), 128) < 1e-10 * scale);
    }

    #[test]
    fn zero_spectrogram_synthesizes_silence() {
        let cfg = StftConfig::default();
        let s = Spectrogram::from_coeffs(Array2::zeros((5, 129)), cfg, 10_000).unwrap();
        let y = stft_synthesize(&s).unwrap();
        assert_eq!(y.len(), 4 * 128 + 256);
        assert!(y.samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn second_round_trip_is_idempotent_on_interior() {
        let cfg = StftConfig::default();
        let w = noise(3000, 4);
        let y1 = stft_synthesize(&stft_analyze(&w, &cfg).unwrap()).unwrap();
        let y2 = stft_synthesize(&stft_analyze(&y1, &cfg).unwrap()).unwrap();
        assert!(interior_max_err(y1.samples(), y2.samples(), 256) < 1e-10);
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let w = noise(1024, 5);
        let s = stft_analyze(&w, &cfg).unwrap();
        let win = cfg.window();
        for (m, row) in s.coeffs().rows().into_iter().enumerate() {
            let time: f64 = (0..256).map(|n| (w.samples()[m * 128 + n] * win[n]).powi(2)).sum();
            // two-sided: DC and Nyquist once, all others twice
            let freq: f64 = row
                .iter()
                .enumerate()
                .map(|(k, c)| if k == 0 || k == 128 { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
                .sum::<f64>()
                / 256.0;
            assert!((time - freq).abs() < 1e-10 * time);
        }
    }

    #[test]
    fn gain_identity_zero_and_half() {
        let s = stft_analyze(&noise(1024, 6), &StftConfig::default()).unwrap();
        let dim = s.coeffs().dim();
        let ones = apply_gain_with_noisy_phase(&s, &Array2::ones(dim)).unwrap();
        assert_eq!(ones, s);
        let zeros = apply_gain_with_noisy_phase(&s, &Array2::zeros(dim)).unwrap();
        assert!(zeros.coeffs().iter().all(|c| c.norm() == 0.0));
        let half = apply_gain_with_noisy_phase(&s, &Array2::from_elem(dim, 0.5)).unwrap();
        for (a, b) in s.coeffs().iter().zip(half.coeffs()) {
            assert!((b.norm() - 0.5 * a.norm()).abs() < 1e-12 * a.norm().max(1.0));
            if a.norm() > 0.0 {
                assert!((b.arg() - a.arg()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gain_errors() {
        let s = stft_analyze(&noise(1024, 7), &StftConfig::default()).unwrap();
        assert!(apply_gain_with_noisy_phase(&s, &Array2::ones((2, 129))).is_err());
        let mut g = Array2::ones(s.coeffs().dim());
        g[[0, 0]] = 1.5;
        assert!(apply_gain_with_noisy_phase(&s, &g).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let s = stft_analyze(&noise(1024, 8), &StftConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        s.write_dump(&p).unwrap();
        assert_eq!(Spectrogram::read_dump(&p).unwrap(), s);
    }

    #[test]
    fn noise_round_trip_stays_finite_for_random_lengths() {
        let mut rng = seed::rng(9);
        for _ in 0..5 {
            let n = rng.random_range(256..3000);
            let w = noise(n, n as u64);
            let y = stft_synthesize(&stft_analyze(&w, &StftConfig::default()).unwrap()).unwrap();
            assert!(y.samples().iter().all(|v| v.is_finite()));
        }
    }
}
