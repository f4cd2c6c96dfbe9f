use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bands::EnvelopeMatrix;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCorrelation {
    /// Pearson r per band (band 1 first).
    pub per_band: Vec<f64>,
    /// Pearson r over the pairs of all bands together.
    pub pooled: f64,
    pub pairs: usize,
}

/// Samples `pairs_per_utterance` frames per utterance and band, uniformly
/// with replacement, and correlates the two systems' gains at those frames.
/// Both gain sets must come from the same inputs (bands x frames each).
pub fn gain_correlation(
    a: &[EnvelopeMatrix],
    b: &[EnvelopeMatrix],
    pairs_per_utterance: usize,
    seed: u64,
) -> Result<GainCorrelation> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() || pairs_per_utterance == 0 {
        return Err(Error::invalid("need at least one utterance and one pair"));
    }
    let bands = a[0].bands();
    let mut xa = vec![Vec::new(); bands];
    let mut xb = vec![Vec::new(); bands];
    let mut rng = seed::rng(seed);
    for (ga, gb) in a.iter().zip(b) {
        if ga.values().dim() != gb.values().dim() || ga.bands() != bands {
            return Err(Error::invalid("gain matrices of the two systems differ in shape"));
        }
        for j in 0..bands {
            for _ in 0..pairs_per_utterance {
                let m = rng.random_range(0..ga.frames());
                xa[j].push(ga.values()[[j, m]]);
                xb[j].push(gb.values()[[j, m]]);
            }
        }
    }
    let per_band = xa
        .iter()
        .zip(&xb)
        .map(|(x, y)| stats::pearson(x, y))
        .collect::<Result<Vec<_>>>()?;
    let (pa, pb): (Vec<f64>, Vec<f64>) = (xa.concat(), xb.concat());
    Ok(GainCorrelation {
        per_band,
        pooled: stats::pearson(&pa, &pb)?,
        pairs: pa.len(),
    })
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;

    use super::*;

    fn random_gains(utts: usize, s: u64) -> Vec<EnvelopeMatrix> {
        let mut rng = seed::rng(s);
        (0..utts)
            .map(|_| EnvelopeMatrix::new(Array2::from_shape_simple_fn((3, 50), || rng.random_range(0.0..1.0))).unwrap())
            .collect()
    }

    #[test]
    fn identical_systems_correlate_perfectly() {
        let g = random_gains(5, 1);
        let r = gain_correlation(&g, &g, 10, 2).unwrap();
        assert!(r.per_band.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((r.pooled - 1.0).abs() < 1e-12);
        assert_eq!(r.pairs, 150);
    }

    #[test]
    fn independent_gains_are_nearly_uncorrelated() {
        let (a, b) = (random_gains(400, 3), random_gains(400, 4));
        let r = gain_correlation(&a, &b, 10, 5).unwrap();
        assert!(r.pairs >= 10_000);
        assert!(r.pooled.abs() < 0.1, "{}", r.pooled);
    }

    #[test]
    fn complementary_gains_anticorrelate() {
        let a = random_gains(5, 6);
        let b: Vec<_> = a
            .iter()
            .map(|g| EnvelopeMatrix::new(g.values().mapv(|v| 1.0 - v)).unwrap())
            .collect();
        let r = gain_correlation(&a, &b, 10, 7).unwrap();
        assert!((r.pooled + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_gains_are_an_error() {
        let a = vec![EnvelopeMatrix::new(Array2::from_elem((2, 10), 0.5)).unwrap()];
        assert!(gain_correlation(&a, &a, 5, 1).is_err());
    }
}
