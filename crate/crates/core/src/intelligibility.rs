//! Envelope linear correlation and STOI-style scores.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bands::EnvelopeMatrix;
use crate::error::{Error, Result};
use crate::stats::{self, MeanCi};

/// Lower signal-to-distortion bound of the clipping stage, in dB.
pub const CLIP_SDR_DB: f64 = -15.0;

/// Sample Pearson correlation between two envelope windows.
pub fn elc(a: &[f64], b: &[f64]) -> Result<f64> {
    stats::pearson(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    /// 1-based band.
    pub j: usize,
    /// 1-based end frame.
    pub m: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoiReport {
    pub d: f64,
    pub per_band_mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_window: Option<Vec<WindowScore>>,
    pub n: usize,
    pub bands: usize,
    pub windows_per_band: usize,
    /// Windows where either side was constant; they contribute 0.
    pub constant_windows: usize,
    /// Envelope values limited by the clipping stage (extended score only).
    pub clipped_values: usize,
}

impl StoiReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-window table as CSV with header `j,m,rho`.
    pub fn write_window_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = self
            .per_window
            .as_ref()
            .ok_or_else(|| Error::invalid("report holds no per-window table"))?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["j", "m", "rho"])?;
        for r in rows {
            out.write_record([r.j.to_string(), r.m.to_string(), format!("{:.17e}", r.rho)])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Drops the per-window table.
    pub fn summary(mut self) -> Self {
        self.per_window = None;
        self
    }
}

fn check_shapes(clean: &EnvelopeMatrix, proc: &EnvelopeMatrix, n: usize) -> Result<()> {
    if clean.bands() != proc.bands() {
        return Err(Error::DimensionMismatch {
            expected: clean.bands(),
            got: proc.bands(),
        });
    }
    if clean.frames() != proc.frames() {
        return Err(Error::DimensionMismatch {
            expected: clean.frames(),
            got: proc.frames(),
        });
    }
    if n < 2 {
        return Err(Error::invalid("envelope windows need N >= 2"));
    }
    if clean.frames() < n {
        return Err(Error::InsufficientContext {
            end_frame: clean.frames(),
            len: n,
        });
    }
    Ok(())
}

fn score<F>(clean: &EnvelopeMatrix, proc: &EnvelopeMatrix, n: usize, mut window_rho: F) -> Result<StoiReport>
where
    F: FnMut(&[f64], &[f64]) -> (Option<f64>, usize),
{
    check_shapes(clean, proc, n)?;
    let frames = clean.frames();
    let per_band_windows = frames - n + 1;
    let mut per_window = Vec::with_capacity(clean.bands() * per_band_windows);
    let mut per_band_mean = Vec::with_capacity(clean.bands());
    let mut constant_windows = 0;
    let mut clipped_values = 0;
    for j in 1..=clean.bands() {
        let c = clean.band_row(j)?.to_vec();
        let p = proc.band_row(j)?.to_vec();
        let mut band = Vec::with_capacity(per_band_windows);
        for m in n..=frames {
            let (rho, clipped) = window_rho(&c[m - n..m], &p[m - n..m]);
            clipped_values += clipped;
            let rho = rho.unwrap_or_else(|| {
                constant_windows += 1;
                0.0
            });
            band.push(rho);
            per_window.push(WindowScore { j, m, rho });
        }
        per_band_mean.push(stats::mean(&band));
    }
    let all: Vec<f64> = per_window.iter().map(|w| w.rho).collect();
    Ok(StoiReport {
        d: stats::mean(&all),
        per_band_mean,
        per_window: Some(per_window),
        n,
        bands: clean.bands(),
        windows_per_band: per_band_windows,
        constant_windows,
        clipped_values,
    })
}

fn rho_or_constant(a: &[f64], b: &[f64]) -> Option<f64> {
    match elc(a, b) {
        Ok(r) => Some(r),
        Err(Error::UndefinedCorrelation) => None,
        Err(e) => unreachable!("window shapes were validated: {e}"),
    }
}

/// Mean ELC over all bands and window end frames `N..=M`.
pub fn approximate_stoi(clean: &EnvelopeMatrix, proc: &EnvelopeMatrix, n: usize) -> Result<StoiReport> {
    score(clean, proc, n, |c, p| (rho_or_constant(c, p), 0))
}

/// As [`approximate_stoi`], but each processed window is first scaled to the
/// clean window's energy and limited to `(1 + 10^(15/20))` times the clean
/// values.
pub fn extended_stoi_with_clipping(clean: &EnvelopeMatrix, proc: &EnvelopeMatrix, n: usize) -> Result<StoiReport> {
    let bound = 1.0 + 10f64.powf(-CLIP_SDR_DB / 20.0);
    let mut scratch = vec![0.0; n];
    score(clean, proc, n, |c, p| {
        let pn = stats::norm(p);
        let scale = if pn > 0.0 { stats::norm(c) / pn } else { 0.0 };
        let mut clipped = 0;
        for ((s, &pv), &cv) in scratch.iter_mut().zip(p).zip(c) {
            let v = scale * pv;
            let cap = bound * cv;
            *s = if v > cap {
                clipped += 1;
                cap
            } else {
                v
            };
        }
        (rho_or_constant(c, &scratch), clipped)
    })
}

/// Mean paired difference `a - b` with a 95% interval.
pub fn elc_difference_profile(a: &[f64], b: &[f64]) -> Result<MeanCi> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    MeanCi::from_samples(&diff)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand::Rng;

    use super::*;
    use crate::seed;

    fn textbook_pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa.sqrt() * sbb.sqrt())
    }

    fn random_matrix(bands: usize, frames: usize, s: u64) -> EnvelopeMatrix {
        let mut rng = seed::rng(s);
        EnvelopeMatrix::new(Array2::from_shape_fn((bands, frames), |_| rng.random_range(0.0..2.0))).unwrap()
    }

    #[test]
    fn self_negation_and_affine() {
        let a = [1.0, 3.0, 2.0, 5.0];
        assert!((elc(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((elc(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        let aff: Vec<f64> = a.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((elc(&a, &aff).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(elc(&a, &[2.0; 4]), Err(Error::UndefinedCorrelation)));
    }

    #[test]
    fn matches_textbook_pearson() {
        let mut rng = seed::rng(10);
        for _ in 0..2000 {
            let n = rng.random_range(2..40);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!((elc(&a, &b).unwrap() - textbook_pearson(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_and_scaled_processing_score_one() {
        let x = random_matrix(15, 60, 1);
        let r = approximate_stoi(&x, &x, 30).unwrap();
        assert!((r.d - 1.0).abs() < 1e-12);
        let scaled = EnvelopeMatrix::new(x.values() * 3.0).unwrap();
        assert!((approximate_stoi(&x, &scaled, 30).unwrap().d - 1.0).abs() < 1e-12);
        assert!((extended_stoi_with_clipping(&x, &scaled, 30).unwrap().d - 1.0).abs() < 1e-12);
        let e = extended_stoi_with_clipping(&x, &x, 30).unwrap();
        assert!((e.d - 1.0).abs() < 1e-12);
        assert_eq!(e.clipped_values, 0);
    }

    #[test]
    fn tiny_instance_equals_hand_average() {
        let n = 3;
        let clean = random_matrix(2, n + 1, 2);
        let proc = random_matrix(2, n + 1, 3);
        let r = approximate_stoi(&clean, &proc, n).unwrap();
        let mut sum = 0.0;
        for j in 0..2 {
            for start in 0..2 {
                let c: Vec<f64> = (start..start + n).map(|m| clean.values()[[j, m]]).collect();
                let p: Vec<f64> = (start..start + n).map(|m| proc.values()[[j, m]]).collect();
                sum += textbook_pearson(&c, &p);
            }
        }
        assert!((r.d - sum / 4.0).abs() < 1e-12);
        assert_eq!(r.per_window.as_ref().unwrap().len(), 4);
        let mean_windows = stats::mean(&r.per_window.unwrap().iter().map(|w| w.rho).collect::<Vec<_>>());
        assert!((r.d - mean_windows).abs() < 1e-12);
    }

    #[test]
    fn inflated_sample_engages_clipping() {
        let clean = random_matrix(1, 30, 4);
        let mut p = clean.values().clone();
        p[[0, 14]] *= 100.0;
        let proc = EnvelopeMatrix::new(p).unwrap();
        let approx = approximate_stoi(&clean, &proc, 30).unwrap();
        let ext = extended_stoi_with_clipping(&clean, &proc, 30).unwrap();
        assert!(ext.clipped_values > 0);
        assert!(ext.d > approx.d, "{} vs {}", ext.d, approx.d);
    }

    #[test]
    fn no_clipping_means_scores_agree() {
        let clean = random_matrix(3, 40, 5);
        let mut rng = seed::rng(6);
        let proc = EnvelopeMatrix::new(clean.values().mapv(|v| v * rng.random_range(0.9..1.1))).unwrap();
        let a = approximate_stoi(&clean, &proc, 10).unwrap();
        let e = extended_stoi_with_clipping(&clean, &proc, 10).unwrap();
        assert_eq!(e.clipped_values, 0);
        assert!((a.d - e.d).abs() < 1e-12);
    }

    #[test]
    fn constant_windows_count_as_zero() {
        let clean = random_matrix(1, 5, 7);
        let proc = EnvelopeMatrix::new(Array2::from_elem((1, 5), 0.5)).unwrap();
        let r = approximate_stoi(&clean, &proc, 3).unwrap();
        assert_eq!(r.constant_windows, 3);
        assert_eq!(r.d, 0.0);
    }

    #[test]
    fn shape_errors() {
        let a = random_matrix(2, 10, 8);
        let b = random_matrix(2, 9, 9);
        assert!(approximate_stoi(&a, &b, 3).is_err());
        assert!(matches!(
            approximate_stoi(&a, &a, 11),
            Err(Error::InsufficientContext { .. })
        ));
    }

    #[test]
    fn difference_profile_cases() {
        let a = [0.5, 0.7, 0.1, 0.9];
        let same = elc_difference_profile(&a, &a).unwrap();
        assert_eq!((same.mean, same.width()), (0.0, 0.0));
        let shifted: Vec<f64> = a.iter().map(|v| v - 0.01).collect();
        let s = elc_difference_profile(&a, &shifted).unwrap();
        assert!((s.mean - 0.01).abs() < 1e-15);
        assert!(s.width() < 1e-14);
        assert!(elc_difference_profile(&a, &a[..3]).is_err());
    }

    #[test]
    fn difference_profile_matches_textbook_stats() {
        let mut rng = seed::rng(11);
        let a: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let p = elc_difference_profile(&a, &b).unwrap();
        assert!((p.mean - mean).abs() < 1e-12);
        assert!((p.stderr - se).abs() < 1e-12);
        assert!((p.ci_lo - (mean - 1.96 * se)).abs() < 1e-12);
    }

    #[test]
    fn report_serializes() {
        let x = random_matrix(2, 6, 12);
        let r = approximate_stoi(&x, &x, 3).unwrap();
        let mut csv = Vec::new();
        r.write_window_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 9);
        let back: StoiReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
