//! One-third octave band layout and temporal envelopes.
//!
//! Bands are numbered 1..=J and frames 1..=M at every public boundary.

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::{Spectrogram, StftConfig};

pub const BAND_COUNT: usize = 15;
pub const FIRST_CENTER_HZ: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// 1-based band index.
    pub j: usize,
    pub center_hz: f64,
    pub lower_hz: f64,
    pub upper_hz: f64,
    /// First and last STFT bin (inclusive, 0-based bin numbers).
    pub k1: usize,
    pub k2: usize,
}

impl Band {
    pub fn bins(&self) -> std::ops::RangeInclusive<usize> {
        self.k1..=self.k2
    }

    pub fn width(&self) -> usize {
        self.k2 - self.k1 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandLayout {
    bands: Vec<Band>,
    fft_size: usize,
    sample_rate_hz: u32,
}

/// Builds the J=15 layout. A bin belongs to band j when its center lies in
/// `[lower, upper)` of that band.
pub fn build_band_layout(sample_rate_hz: u32, fft_size: usize) -> Result<BandLayout> {
    if sample_rate_hz == 0 || fft_size < 2 {
        return Err(Error::invalid("sample rate and FFT size must be positive"));
    }
    let bin_hz = f64::from(sample_rate_hz) / fft_size as f64;
    let nbins = fft_size / 2 + 1;
    let mut bands = Vec::with_capacity(BAND_COUNT);
    for j in 1..=BAND_COUNT {
        let center_hz = FIRST_CENTER_HZ * 2f64.powf((j as f64 - 1.0) / 3.0);
        let lower_hz = center_hz * 2f64.powf(-1.0 / 6.0);
        let upper_hz = center_hz * 2f64.powf(1.0 / 6.0);
        let inside: Vec<usize> = (0..nbins)
            .filter(|&k| {
                let f = k as f64 * bin_hz;
                f >= lower_hz && f < upper_hz
            })
            .collect();
        let (Some(&k1), Some(&k2)) = (inside.first(), inside.last()) else {
            return Err(Error::invalid(format!(
                "band {j} ({lower_hz:.1}-{upper_hz:.1} Hz) contains no STFT bin"
            )));
        };
        bands.push(Band {
            j,
            center_hz,
            lower_hz,
            upper_hz,
            k1,
            k2,
        });
    }
    Ok(BandLayout {
        bands,
        fft_size,
        sample_rate_hz,
    })
}

impl BandLayout {
    pub fn for_stft(cfg: &StftConfig, sample_rate_hz: u32) -> Result<Self> {
        build_band_layout(sample_rate_hz, cfg.fft_size)
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// Band by 1-based index.
    pub fn band(&self, j: usize) -> Result<&Band> {
        j.checked_sub(1)
            .and_then(|i| self.bands.get(i))
            .ok_or_else(|| Error::invalid(format!("band index {j} outside 1..={}", self.bands.len())))
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Band a bin belongs to, if any.
    pub fn band_of_bin(&self, k: usize) -> Option<usize> {
        self.bands.iter().find(|b| b.bins().contains(&k)).map(|b| b.j)
    }

    /// CSV with header `j,cf,k1,k2`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["j", "cf", "k1", "k2"])?;
        for b in &self.bands {
            out.write_record([
                b.j.to_string(),
                format!("{:.4}", b.center_hz),
                b.k1.to_string(),
                b.k2.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Expands per-band frame gains (J x M) to per-bin gains (M x bins).
    /// Bins below the first band take its gain, bins above the last band
    /// take the last band's gain.
    pub fn broadcast_gains(&self, band_gains: &EnvelopeMatrix) -> Result<Array2<f64>> {
        if band_gains.bands() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: band_gains.bands(),
            });
        }
        let frames = band_gains.frames();
        let nbins = self.bins();
        let owner: Vec<usize> = (0..nbins)
            .map(|k| {
                self.band_of_bin(k).unwrap_or(if k < self.bands[0].k1 { 1 } else { self.len() })
            })
            .collect();
        let mut out = Array2::zeros((frames, nbins));
        for m in 0..frames {
            for (k, &j) in owner.iter().enumerate() {
                out[[m, k]] = band_gains.values[[j - 1, m]];
            }
        }
        Ok(out)
    }
}

/// Non-negative band amplitudes, stored bands x frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeMatrix {
    values: Array2<f64>,
}

impl EnvelopeMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("envelope value {v} not finite and non-negative")));
        }
        Ok(Self { values })
    }

    pub fn bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Envelope of band `j` (1-based) over all frames.
    pub fn band_row(&self, j: usize) -> Result<ArrayView1<'_, f64>> {
        if j == 0 || j > self.bands() {
            return Err(Error::invalid(format!("band index {j} outside 1..={}", self.bands())));
        }
        Ok(self.values.row(j - 1))
    }
}

/// A length-N slice of one band's envelope ending at frame `end_frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeVector {
    pub values: Vec<f64>,
    /// 1-based band index.
    pub band: usize,
    /// 1-based end frame.
    pub end_frame: usize,
}

impl EnvelopeVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// `e(j, m) = sqrt(sum over the band's bins of mag(k, m)^2)`, from a
/// frames x bins magnitude matrix.
pub fn band_envelope_from_magnitudes(mags: &Array2<f64>, layout: &BandLayout) -> Result<EnvelopeMatrix> {
    if mags.ncols() != layout.bins() {
        return Err(Error::DimensionMismatch {
            expected: layout.bins(),
            got: mags.ncols(),
        });
    }
    let frames = mags.nrows();
    let mut values = Array2::zeros((layout.len(), frames));
    for (bi, band) in layout.bands().iter().enumerate() {
        for m in 0..frames {
            let row = mags.row(m);
            let energy: f64 = band.bins().map(|k| row[k] * row[k]).sum();
            values[[bi, m]] = energy.sqrt();
        }
    }
    EnvelopeMatrix::new(values)
}

pub fn band_envelope(s: &Spectrogram, layout: &BandLayout) -> Result<EnvelopeMatrix> {
    band_envelope_from_magnitudes(&s.magnitudes(), layout)
}

/// The `n` most recent values of band `j` ending at frame `m` (both 1-based).
pub fn envelope_window(e: &EnvelopeMatrix, j: usize, m: usize, n: usize) -> Result<EnvelopeVector> {
    if n < 2 {
        return Err(Error::invalid("envelope windows need N >= 2"));
    }
    if m < n {
        return Err(Error::InsufficientContext { end_frame: m, len: n });
    }
    if m > e.frames() {
        return Err(Error::invalid(format!("end frame {m} beyond {} frames", e.frames())));
    }
    let row = e.band_row(j)?;
    Ok(EnvelopeVector {
        values: row.slice(ndarray::s![m - n..m]).to_vec(),
        band: j,
        end_frame: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> BandLayout {
        build_band_layout(10_000, 256).unwrap()
    }

    #[test]
    fn layout_matches_bin_enumeration_table() {
        // bin ranges from an independent enumeration of k * 39.0625 Hz against the edges
        let expected = [
            (4, 4),
            (5, 5),
            (6, 6),
            (7, 8),
            (9, 10),
            (11, 13),
            (14, 17),
            (18, 21),
            (22, 27),
            (28, 34),
            (35, 43),
            (44, 54),
            (55, 68),
            (69, 86),
            (87, 109),
        ];
        let l = layout();
        assert_eq!(l.len(), 15);
        for (b, (k1, k2)) in l.bands().iter().zip(expected) {
            assert_eq!((b.k1, b.k2), (k1, k2), "band {}", b.j);
        }
        let b1 = l.band(1).unwrap();
        assert!((b1.lower_hz - 133.6348).abs() < 1e-3);
        assert!((b1.upper_hz - 168.3693).abs() < 1e-3);
    }

    #[test]
    fn centers_follow_closed_form() {
        let l = layout();
        assert_eq!(l.band(1).unwrap().center_hz, 150.0);
        assert!((l.band(15).unwrap().center_hz - 3809.7625).abs() < 1e-3);
    }

    #[test]
    fn bands_are_disjoint_and_cover_their_span() {
        let l = layout();
        for w in l.bands().windows(2) {
            assert!(w[0].k1 <= w[0].k2);
            assert!(w[0].k2 < w[1].k1);
        }
        for k in l.band(1).unwrap().k1..=l.band(15).unwrap().k2 {
            let owners = l.bands().iter().filter(|b| b.bins().contains(&k)).count();
            assert_eq!(owners, 1, "bin {k}");
        }
    }

    #[test]
    fn empty_band_is_an_error() {
        assert!(build_band_layout(10_000, 16).is_err());
    }

    #[test]
    fn single_bin_and_pythagorean_envelopes() {
        let l = layout();
        let mut mags = Array2::zeros((1, 129));
        mags[[0, 11]] = 3.0;
        let e = band_envelope_from_magnitudes(&mags, &l).unwrap();
        assert_eq!(e.values()[[5, 0]], 3.0);
        assert_eq!(e.values().iter().filter(|v| **v != 0.0).count(), 1);
        mags[[0, 12]] = 4.0;
        let e = band_envelope_from_magnitudes(&mags, &l).unwrap();
        assert_eq!(e.values()[[5, 0]], 5.0);
        let z = band_envelope_from_magnitudes(&Array2::zeros((3, 129)), &l).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn window_slicing_and_context() {
        let e = EnvelopeMatrix::new(Array2::from_shape_vec((1, 4), vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(envelope_window(&e, 1, 4, 3).unwrap().values, vec![2.0, 3.0, 4.0]);
        assert!(matches!(
            envelope_window(&e, 1, 2, 3),
            Err(Error::InsufficientContext { .. })
        ));
    }

    #[test]
    fn thirty_frame_window_spans_384_ms() {
        let cfg = StftConfig::default();
        let span_ms = 30.0 * cfg.hop as f64 / 10.0;
        assert!((span_ms - 384.0).abs() < 1e-9);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let mut buf = Vec::new();
        layout().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "j,cf,k1,k2");
        assert_eq!(lines.len(), 16);
        assert_eq!(lines[1], "1,150.0000,4,4");
    }

    #[test]
    fn broadcast_fills_every_bin() {
        let l = layout();
        let g = EnvelopeMatrix::new(Array2::from_shape_fn((15, 2), |(j, _)| (j + 1) as f64 / 20.0)).unwrap();
        let b = l.broadcast_gains(&g).unwrap();
        assert_eq!(b.dim(), (2, 129));
        assert_eq!(b[[0, 0]], 0.05);
        assert_eq!(b[[0, 11]], 6.0 / 20.0);
        assert_eq!(b[[1, 128]], 0.75);
    }
}
