//! Small numeric helpers shared across modules.
//!
//! Reductions use pairwise summation so results do not depend on how the
//! caller happened to chunk the work.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance. NaN for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - mu) * (x - mu)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    (pairwise_sum(&sq) / xs.len() as f64).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prod)
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Subtracts the sample mean (applies the centering matrix `I - 11ᵀ/N`).
pub fn center(x: &[f64]) -> Vec<f64> {
    let mu = mean(x);
    x.iter().map(|v| v - mu).collect()
}

/// Pearson correlation of two samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("correlation needs at least two samples"));
    }
    let ac = center(a);
    let bc = center(b);
    let (na, nb) = (norm(&ac), norm(&bc));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((dot(&ac, &bc) / (na * nb)).clamp(-1.0, 1.0))
}

/// Sample mean with its standard error and a normal-theory 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

impl MeanCi {
    pub const Z95: f64 = 1.96;

    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least two samples for a confidence interval, got {}",
                xs.len()
            )));
        }
        let mean = mean(xs);
        let stderr = (sample_variance(xs) / xs.len() as f64).sqrt();
        Ok(Self {
            mean,
            stderr,
            ci_lo: mean - Self::Z95 * stderr,
            ci_hi: mean + Self::Z95 * stderr,
            n: xs.len(),
        })
    }

    pub fn width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }
}

/// Running per-coordinate mean and variance (Welford).
#[derive(Debug, Clone)]
pub struct VectorAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VectorAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Standard error of each coordinate's mean; NaN with fewer than two samples.
    pub fn stderr(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![f64::NAN; self.mean.len()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|s| (s / (n - 1.0) / n).sqrt()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
    }

    #[test]
    fn mean_ci_of_constant_shift_has_zero_width() {
        let ci = MeanCi::from_samples(&[0.01; 10]).unwrap();
        assert!((ci.mean - 0.01).abs() < 1e-15);
        assert!(ci.width().abs() < 1e-15);
    }

    #[test]
    fn welford_matches_two_pass() {
        let rows = [[1.0, 2.0], [3.0, 5.0], [4.0, 11.0], [10.0, -1.0]];
        let mut acc = VectorAccumulator::new(2);
        for r in &rows {
            acc.push(r);
        }
        for j in 0..2 {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            assert!((acc.mean()[j] - mean(&col)).abs() < 1e-12);
            let se = (sample_variance(&col) / 4.0).sqrt();
            assert!((acc.stderr()[j] - se).abs() < 1e-12);
        }
    }
}
