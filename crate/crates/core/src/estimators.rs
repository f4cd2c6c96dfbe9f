//! Bayesian envelope estimators: the correlation-optimal estimator, the
//! conditional mean, and the experiments comparing them as N grows.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::seed;
use crate::stats::{self, VectorAccumulator};

/// Zero-mean, unit-norm version of `x`.
pub fn normalize_e(x: &[f64]) -> Result<Vec<f64>> {
    let c = stats::center(x);
    let n = stats::norm(&c);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(c.into_iter().map(|v| v / n).collect())
}

/// Maximizer of `alphaᵀβ` over vectors with zero mean and unit norm.
pub fn argmax_unit_zero_mean(alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() < 2 {
        return Err(Error::invalid("need at least two coordinates"));
    }
    let c = stats::center(alpha);
    let n = stats::norm(&c);
    let scale = stats::norm(alpha).max(f64::MIN_POSITIVE);
    if n <= 1e-14 * scale {
        return Err(Error::ConstantObjective);
    }
    Ok(c.into_iter().map(|v| v / n).collect())
}

/// Law of one envelope coordinate given the observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CoordinateLaw {
    /// `exp(X)` with `X ~ Normal(mu, sigma)`.
    LogNormal { mu: f64, sigma: f64 },
    /// `Normal(mean, sd)` conditioned on being non-negative.
    TruncatedNormal { mean: f64, sd: f64 },
}

fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl CoordinateLaw {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CoordinateLaw::LogNormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
            CoordinateLaw::TruncatedNormal { mean, sd } => {
                mean.is_finite() && sd.is_finite() && sd > 0.0 && upper_tail(-mean / sd) > 1e-6
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid coordinate law {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CoordinateLaw::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            CoordinateLaw::TruncatedNormal { mean, sd } => {
                let a = -mean / sd;
                mean + sd * std_normal_pdf(a) / upper_tail(a)
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            CoordinateLaw::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                (s2.exp() - 1.0) * (2.0 * mu + s2).exp()
            }
            CoordinateLaw::TruncatedNormal { mean, sd } => {
                let a = -mean / sd;
                let lambda = std_normal_pdf(a) / upper_tail(a);
                sd * sd * (1.0 + a * lambda - lambda * lambda)
            }
        }
    }

    pub fn second_moment(&self) -> f64 {
        let m = self.mean();
        self.variance() + m * m
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            CoordinateLaw::LogNormal { mu, sigma } => {
                if sigma == 0.0 {
                    mu.exp()
                } else {
                    LogNormal::new(mu, sigma).expect("validated").sample(rng)
                }
            }
            CoordinateLaw::TruncatedNormal { mean, sd } => {
                let normal = Normal::new(mean, sd).expect("validated");
                loop {
                    let v = normal.sample(rng);
                    if v >= 0.0 {
                        return v;
                    }
                }
            }
        }
    }
}

/// Conditional law of the clean envelope given one fixed observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionalEnvelopeModel {
    /// Finite joint table of outcomes with probabilities.
    Discrete { outcomes: Vec<Vec<f64>>, probs: Vec<f64> },
    /// Conditionally independent coordinates.
    Independent { laws: Vec<CoordinateLaw> },
}

impl ConditionalEnvelopeModel {
    pub fn discrete(outcomes: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let m = ConditionalEnvelopeModel::Discrete { outcomes, probs };
        m.validate()?;
        Ok(m)
    }

    pub fn independent(laws: Vec<CoordinateLaw>) -> Result<Self> {
        let m = ConditionalEnvelopeModel::Independent { laws };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConditionalEnvelopeModel::Discrete { outcomes, probs } => {
                if outcomes.is_empty() || outcomes.len() != probs.len() {
                    return Err(Error::invalid("discrete model needs one probability per outcome"));
                }
                let dim = outcomes[0].len();
                if dim == 0 || outcomes.iter().any(|o| o.len() != dim) {
                    return Err(Error::invalid("discrete outcomes must share a positive dimension"));
                }
                if outcomes.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::invalid("outcomes must be finite and non-negative"));
                }
                if probs.iter().any(|p| p.is_nan() || *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("probabilities must be non-negative and sum to 1"));
                }
                Ok(())
            }
            ConditionalEnvelopeModel::Independent { laws } => {
                if laws.is_empty() {
                    return Err(Error::invalid("model needs at least one coordinate"));
                }
                laws.iter().try_for_each(CoordinateLaw::validate)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConditionalEnvelopeModel::Discrete { outcomes, .. } => outcomes[0].len(),
            ConditionalEnvelopeModel::Independent { laws } => laws.len(),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            ConditionalEnvelopeModel::Discrete { outcomes, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (o, p) in outcomes.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return o.clone();
                    }
                }
                outcomes.last().expect("validated non-empty").clone()
            }
            ConditionalEnvelopeModel::Independent { laws } => laws.iter().map(|l| l.sample(rng)).collect(),
        }
    }

    /// Exact conditional mean.
    pub fn exact_mean(&self) -> Vec<f64> {
        match self {
            ConditionalEnvelopeModel::Discrete { outcomes, probs } => {
                let mut m = vec![0.0; self.dim()];
                for (o, p) in outcomes.iter().zip(probs) {
                    for (mi, v) in m.iter_mut().zip(o) {
                        *mi += p * v;
                    }
                }
                m
            }
            ConditionalEnvelopeModel::Independent { laws } => laws.iter().map(CoordinateLaw::mean).collect(),
        }
    }
}

/// A Monte-Carlo estimate with per-coordinate standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
    /// Draws discarded because they were constant vectors.
    pub skipped: usize,
}

/// Correlation-optimal estimate together with the averaged normalized
/// vector it is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmelcEstimate {
    /// Zero-mean, unit-norm estimate.
    pub estimate: Vec<f64>,
    /// Mean of the normalized draws, before rescaling.
    pub alpha: Vec<f64>,
    pub alpha_stderr: Vec<f64>,
    pub samples: usize,
    pub skipped: usize,
}

fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        Err(Error::invalid("samples must be at least 1"))
    } else {
        Ok(())
    }
}

/// Conditional-mean estimate by Monte Carlo.
pub fn mmse_estimate(model: &ConditionalEnvelopeModel, samples: usize, seed: u64) -> Result<McEstimate> {
    model.validate()?;
    check_samples(samples)?;
    let mut rng = seed::rng(seed);
    let mut acc = VectorAccumulator::new(model.dim());
    for _ in 0..samples {
        acc.push(&model.sample(&mut rng));
    }
    Ok(McEstimate {
        estimate: acc.mean().to_vec(),
        stderr: acc.stderr(),
        samples,
        skipped: 0,
    })
}

/// Conditional mean in closed form.
pub fn mmse_exact(model: &ConditionalEnvelopeModel) -> Result<Vec<f64>> {
    model.validate()?;
    Ok(model.exact_mean())
}

fn finish_mmelc(alpha: Vec<f64>, alpha_stderr: Vec<f64>, samples: usize, skipped: usize) -> Result<MmelcEstimate> {
    let norm = stats::norm(&alpha);
    let noise = alpha_stderr
        .iter()
        .filter(|s| s.is_finite())
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt();
    if norm <= 1e-12 || norm <= 3.0 * noise {
        return Err(Error::ConstantObjective);
    }
    Ok(MmelcEstimate {
        estimate: alpha.iter().map(|v| v / norm).collect(),
        alpha,
        alpha_stderr,
        samples,
        skipped,
    })
}

/// Correlation-optimal estimate: the Monte-Carlo mean of the normalized
/// draws, rescaled to unit norm. Fails with [`Error::ConstantObjective`]
/// when that mean is indistinguishable from zero.
pub fn mmelc_estimate(model: &ConditionalEnvelopeModel, samples: usize, seed: u64) -> Result<MmelcEstimate> {
    model.validate()?;
    check_samples(samples)?;
    if model.dim() < 2 {
        return Err(Error::invalid("need at least two coordinates"));
    }
    let mut rng = seed::rng(seed);
    let mut acc = VectorAccumulator::new(model.dim());
    let mut skipped = 0;
    for _ in 0..samples {
        match normalize_e(&model.sample(&mut rng)) {
            Ok(e) => acc.push(&e),
            Err(_) => skipped += 1,
        }
    }
    if acc.count() == 0 {
        return Err(Error::UndefinedCorrelation);
    }
    let stderr = if acc.count() >= 2 {
        acc.stderr()
    } else {
        vec![0.0; model.dim()]
    };
    finish_mmelc(acc.mean().to_vec(), stderr, acc.count(), skipped)
}

/// Correlation-optimal estimate by enumeration of a discrete model.
pub fn mmelc_exact(model: &ConditionalEnvelopeModel) -> Result<MmelcEstimate> {
    model.validate()?;
    let ConditionalEnvelopeModel::Discrete { outcomes, probs } = model else {
        return Err(Error::invalid("exact correlation-optimal estimate needs a discrete model"));
    };
    let mut alpha = vec![0.0; model.dim()];
    let mut mass = 0.0;
    for (o, p) in outcomes.iter().zip(probs) {
        if let Ok(e) = normalize_e(o) {
            mass += p;
            for (a, v) in alpha.iter_mut().zip(e) {
                *a += p * v;
            }
        }
    }
    if mass == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    let skipped = outcomes.iter().filter(|o| normalize_e(o).is_err()).count();
    alpha.iter_mut().for_each(|a| *a /= mass);
    finish_mmelc(alpha, vec![0.0; model.dim()], outcomes.len(), skipped)
}

/// Expected correlation between the clean envelope and a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedElc {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

pub fn expected_elc(
    model: &ConditionalEnvelopeModel,
    candidate: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ExpectedElc> {
    model.validate()?;
    check_samples(samples)?;
    let cand = normalize_e(candidate)?;
    if cand.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: cand.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let mut rhos = Vec::with_capacity(samples);
    for _ in 0..samples {
        let a = model.sample(&mut rng);
        rhos.push(normalize_e(&a).map_or(0.0, |e| stats::dot(&e, &cand)));
    }
    let stderr = if samples >= 2 {
        (stats::sample_variance(&rhos) / samples as f64).sqrt()
    } else {
        0.0
    };
    Ok(ExpectedElc {
        mean: stats::mean(&rhos),
        stderr,
        samples,
    })
}

/// Expected correlation by enumeration of a discrete model; constant
/// outcomes contribute 0.
pub fn expected_elc_exact(model: &ConditionalEnvelopeModel, candidate: &[f64]) -> Result<f64> {
    model.validate()?;
    let ConditionalEnvelopeModel::Discrete { outcomes, probs } = model else {
        return Err(Error::invalid("enumeration needs a discrete model"));
    };
    let cand = normalize_e(candidate)?;
    Ok(outcomes
        .iter()
        .zip(probs)
        .map(|(o, p)| p * normalize_e(o).map_or(0.0, |e| stats::dot(&e, &cand)))
        .sum())
}

/// Random family of log-normal models: per coordinate, a spread drawn
/// uniformly from `[sigma_lo, sigma_hi]`, an observation `r = exp(obs_spread * xi)`
/// with standard normal `xi`, and a log-location `ln r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFamily {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub obs_spread: f64,
}

impl Default for LogNormalFamily {
    fn default() -> Self {
        Self {
            sigma_lo: 0.3,
            sigma_hi: 1.0,
            obs_spread: 0.5,
        }
    }
}

impl LogNormalFamily {
    /// Draws an observation and the model conditioned on it.
    pub fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, ConditionalEnvelopeModel)> {
        if !(0.0 <= self.sigma_lo && self.sigma_lo <= self.sigma_hi) {
            return Err(Error::invalid("invalid sigma range"));
        }
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut r = Vec::with_capacity(n);
        let mut laws = Vec::with_capacity(n);
        for _ in 0..n {
            let sigma = if self.sigma_hi > self.sigma_lo {
                rng.random_range(self.sigma_lo..=self.sigma_hi)
            } else {
                self.sigma_lo
            };
            let obs = (self.obs_spread * std.sample(rng)).exp();
            r.push(obs);
            laws.push(CoordinateLaw::LogNormal { mu: obs.ln(), sigma });
        }
        Ok((r, ConditionalEnvelopeModel::independent(laws)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub samples: usize,
    /// Independent observations (models) per N.
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub family: LogNormalFamily,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: vec![4, 16, 64, 256],
            samples: 100_000,
            replicates: 8,
            seed: 0,
            family: LogNormalFamily::default(),
        }
    }
}

/// Affine distance `1 - rho` between the two estimators at one N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub metric: f64,
    pub stderr: f64,
    pub samples: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// For each N, draws `replicates` observations, computes both estimators and
/// reports the mean and standard error of `1 - rho(mmelc, mmse)`.
pub fn equivalence_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.n_values.len() < 2 || cfg.n_values.iter().any(|&n| n < 2) {
        return Err(Error::invalid("sweep needs at least two N values, each >= 2"));
    }
    if cfg.replicates == 0 {
        return Err(Error::invalid("sweep needs at least one replicate"));
    }
    check_samples(cfg.samples)?;
    cfg.n_values
        .iter()
        .map(|&n| {
            let n_seed = seed::derive(cfg.seed, n as u64);
            let d: Vec<f64> = (0..cfg.replicates)
                .into_par_iter()
                .map(|rep| -> Result<f64> {
                    let rep_seed = seed::derive(n_seed, rep as u64);
                    let mut rng = seed::rng(seed::derive_str(rep_seed, "model"));
                    let (_, model) = cfg.family.draw(n, &mut rng)?;
                    let mmelc = mmelc_estimate(&model, cfg.samples, seed::derive_str(rep_seed, "mc"))?;
                    let mmse = mmse_exact(&model)?;
                    Ok(1.0 - stats::pearson(&mmelc.estimate, &mmse)?)
                })
                .collect::<Result<_>>()?;
            let stderr = if d.len() >= 2 {
                (stats::sample_variance(&d) / d.len() as f64).sqrt()
            } else {
                f64::NAN
            };
            Ok(SweepRow {
                n,
                metric: stats::mean(&d),
                stderr,
                samples: cfg.samples,
                replicates: cfg.replicates,
                seed: cfg.seed,
            })
        })
        .collect()
}

/// Truncated-normal law for coordinate `index` (1-based) of the
/// heterogeneous probe family: location `1 + 0.5 sin(0.9 i + 0.3)`,
/// spread a varying fraction of the location.
pub fn probe_family_law(index: usize) -> CoordinateLaw {
    let i = index as f64;
    let mean = 1.0 + 0.5 * (0.9 * i + 0.3).sin();
    let frac = (0.618 * i).fract();
    CoordinateLaw::TruncatedNormal {
        mean,
        sd: mean * (0.2 + 0.6 * frac),
    }
}

/// Heterogeneous independent model of dimension `n` in which coordinates 1
/// and `n/2` follow the same laws for every `n` (the laws of indices 1 and 2).
pub fn probe_family_model(n: usize) -> Result<ConditionalEnvelopeModel> {
    if n < 4 {
        return Err(Error::invalid("probe family needs N >= 4"));
    }
    let mut laws: Vec<CoordinateLaw> = (1..=n).map(probe_family_law).collect();
    laws.swap(1, n / 2 - 1);
    ConditionalEnvelopeModel::independent(laws)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationConfig {
    pub n_values: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        Self {
            n_values: vec![4, 16, 64, 256],
            samples: 100_000,
            seed: 0,
        }
    }
}

/// Covariance between a centered coordinate and the inverse centered norm,
/// plus law-of-large-numbers diagnostics for the coordinate averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizationRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub cov_first: f64,
    pub cov_first_stderr: f64,
    pub cov_mid: f64,
    pub cov_mid_stderr: f64,
    /// Mean absolute gap between the coordinate average and its expectation.
    pub mean_gap: f64,
    /// Same for the average of squared coordinates.
    pub mean_sq_gap: f64,
    /// Fraction of draws with gap below `3 sigma / sqrt(N)`.
    pub slln_coverage: f64,
    pub samples: usize,
}

fn covariance_with_stderr(x: &[f64], w: &[f64]) -> (f64, f64) {
    let (mx, mw) = (stats::mean(x), stats::mean(w));
    let prods: Vec<f64> = x.iter().zip(w).map(|(a, b)| (a - mx) * (b - mw)).collect();
    let n = prods.len() as f64;
    let cov = stats::pairwise_sum(&prods) / (n - 1.0);
    (cov, (stats::sample_variance(&prods) / n).sqrt())
}

/// Runs the covariance experiment on the model built by `model_for(n)`.
pub fn factorization_check_with<F>(cfg: &FactorizationConfig, model_for: F) -> Result<Vec<FactorizationRow>>
where
    F: Fn(usize) -> Result<ConditionalEnvelopeModel> + Sync,
{
    if cfg.samples < 2 {
        return Err(Error::invalid("factorization check needs at least two samples"));
    }
    cfg.n_values
        .par_iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::invalid("N must be at least 2"));
            }
            let model = model_for(n)?;
            if model.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: model.dim(),
                });
            }
            let ConditionalEnvelopeModel::Independent { laws } = &model else {
                return Err(Error::invalid("factorization check needs independent coordinates"));
            };
            let mu_s = stats::mean(&laws.iter().map(CoordinateLaw::mean).collect::<Vec<_>>());
            let mu_s2 = stats::mean(&laws.iter().map(CoordinateLaw::second_moment).collect::<Vec<_>>());
            let sigma = stats::mean(&laws.iter().map(CoordinateLaw::variance).collect::<Vec<_>>()).sqrt();
            let bound = 3.0 * sigma / (n as f64).sqrt();
            let mid = n / 2 - 1;
            let mut rng = seed::rng(seed::derive(cfg.seed, n as u64));
            let mut z_first = Vec::with_capacity(cfg.samples);
            let mut z_mid = Vec::with_capacity(cfg.samples);
            let mut inv_norm = Vec::with_capacity(cfg.samples);
            let (mut gap, mut gap_sq, mut covered) = (0.0, 0.0, 0usize);
            for _ in 0..cfg.samples {
                let s = model.sample(&mut rng);
                let avg = stats::mean(&s);
                let avg_sq = stats::dot(&s, &s) / n as f64;
                gap += (avg - mu_s).abs();
                gap_sq += (avg_sq - mu_s2).abs();
                if (avg - mu_s).abs() < bound {
                    covered += 1;
                }
                let z = stats::center(&s);
                let zn = stats::norm(&z);
                if zn == 0.0 {
                    continue;
                }
                z_first.push(z[0]);
                z_mid.push(z[mid]);
                inv_norm.push(1.0 / zn);
            }
            let (cov_first, cov_first_stderr) = covariance_with_stderr(&z_first, &inv_norm);
            let (cov_mid, cov_mid_stderr) = covariance_with_stderr(&z_mid, &inv_norm);
            let total = cfg.samples as f64;
            Ok(FactorizationRow {
                n,
                cov_first,
                cov_first_stderr,
                cov_mid,
                cov_mid_stderr,
                mean_gap: gap / total,
                mean_sq_gap: gap_sq / total,
                slln_coverage: covered as f64 / total,
                samples: cfg.samples,
            })
        })
        .collect()
}

/// Covariance experiment on the heterogeneous probe family.
pub fn factorization_check(cfg: &FactorizationConfig) -> Result<Vec<FactorizationRow>> {
    factorization_check_with(cfg, probe_family_model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn normalize_examples() {
        let e = normalize_e(&[3.0, 1.0, 2.0]).unwrap();
        let s = 2f64.sqrt();
        assert!(close(&e, &[1.0 / s, -1.0 / s, 0.0], 1e-15));
        assert!(close(&normalize_e(&e).unwrap(), &e, 1e-15));
        let aff: Vec<f64> = [3.0, 1.0, 2.0].iter().map(|v| 5.0 * v + 7.0).collect();
        assert!(close(&normalize_e(&aff).unwrap(), &e, 1e-15));
        assert!(normalize_e(&[2.0; 3]).is_err());
    }

    #[test]
    fn argmax_closed_form_and_constant_objective() {
        let b = argmax_unit_zero_mean(&[3.0, 1.0, 2.0]).unwrap();
        let s = 2f64.sqrt();
        assert!(close(&b, &[1.0 / s, -1.0 / s, 0.0], 1e-15));
        assert!(matches!(argmax_unit_zero_mean(&[4.0; 5]), Err(Error::ConstantObjective)));
    }

    #[test]
    fn degenerate_discrete_model() {
        let m = ConditionalEnvelopeModel::discrete(vec![vec![1.0, 4.0, 2.0]], vec![1.0]).unwrap();
        assert_eq!(mmse_exact(&m).unwrap(), vec![1.0, 4.0, 2.0]);
        let e = normalize_e(&[1.0, 4.0, 2.0]).unwrap();
        assert!(close(&mmelc_exact(&m).unwrap().estimate, &e, 1e-15));
        assert!(close(&mmelc_estimate(&m, 10, 1).unwrap().estimate, &e, 1e-15));
        let cand = [0.3, 0.1, 0.9];
        let rho = stats::pearson(&[1.0, 4.0, 2.0], &cand).unwrap();
        assert!((expected_elc(&m, &cand, 5, 2).unwrap().mean - rho).abs() < 1e-15);
    }

    #[test]
    fn symmetric_two_outcome_model_has_no_correlation_optimum() {
        let m = ConditionalEnvelopeModel::discrete(vec![vec![1.0, 3.0], vec![3.0, 1.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(mmse_exact(&m).unwrap(), vec![2.0, 2.0]);
        assert!(matches!(mmelc_exact(&m), Err(Error::ConstantObjective)));
        assert!(matches!(mmelc_estimate(&m, 10_000, 3), Err(Error::ConstantObjective)));
        let mc = mmse_estimate(&m, 10_000, 3).unwrap();
        for (e, s) in mc.estimate.iter().zip(&mc.stderr) {
            assert!((e - 2.0).abs() < 3.0 * s);
        }
    }

    #[test]
    fn asymmetric_two_outcome_model_matches_enumeration() {
        let m = ConditionalEnvelopeModel::discrete(
            vec![vec![1.0, 3.0, 2.0], vec![3.0, 1.0, 1.5]],
            vec![0.75, 0.25],
        )
        .unwrap();
        let exact = mmelc_exact(&m).unwrap();
        let mc = mmelc_estimate(&m, 20_000, 4).unwrap();
        for ((a, e), s) in mc.alpha.iter().zip(&exact.alpha).zip(&mc.alpha_stderr) {
            assert!((a - e).abs() < 3.0 * s, "{a} vs {e} (se {s})");
        }
        assert!(stats::mean(&mc.alpha).abs() < 1e-12);
        let cand = [0.2, 0.5, 0.1];
        let enumerated: f64 = 0.75 * stats::pearson(&[1.0, 3.0, 2.0], &cand).unwrap()
            + 0.25 * stats::pearson(&[3.0, 1.0, 1.5], &cand).unwrap();
        assert!((expected_elc_exact(&m, &cand).unwrap() - enumerated).abs() < 1e-12);
    }

    #[test]
    fn lognormal_mean_matches_monte_carlo() {
        let laws = vec![
            CoordinateLaw::LogNormal { mu: 0.0, sigma: 0.5 },
            CoordinateLaw::LogNormal { mu: -1.0, sigma: 1.0 },
        ];
        let m = ConditionalEnvelopeModel::independent(laws).unwrap();
        let exact = mmse_exact(&m).unwrap();
        assert!((exact[0] - 0.125f64.exp()).abs() < 1e-15);
        let mc = mmse_estimate(&m, 50_000, 5).unwrap();
        for ((e, x), s) in mc.estimate.iter().zip(&exact).zip(&mc.stderr) {
            assert!((e - x).abs() < 3.0 * s);
        }
    }

    #[test]
    fn truncated_normal_moments_match_monte_carlo() {
        let law = CoordinateLaw::TruncatedNormal { mean: 0.5, sd: 1.0 };
        let m = ConditionalEnvelopeModel::independent(vec![law]).unwrap();
        let mut rng = seed::rng(6);
        let draws: Vec<f64> = (0..100_000).map(|_| m.sample(&mut rng)[0]).collect();
        assert!(draws.iter().all(|v| *v >= 0.0));
        let se = (law.variance() / draws.len() as f64).sqrt();
        assert!((stats::mean(&draws) - law.mean()).abs() < 4.0 * se);
        assert!((stats::sample_variance(&draws) / law.variance() - 1.0).abs() < 0.02);
    }

    #[test]
    fn probe_family_keeps_probe_laws_fixed() {
        let a = probe_family_model(4).unwrap();
        let b = probe_family_model(64).unwrap();
        let (ConditionalEnvelopeModel::Independent { laws: la }, ConditionalEnvelopeModel::Independent { laws: lb }) =
            (&a, &b)
        else {
            unreachable!()
        };
        assert_eq!(la[0], lb[0]);
        assert_eq!(la[1], lb[31]);
    }

    #[test]
    fn sweep_reports_non_negative_distance() {
        let cfg = SweepConfig {
            n_values: vec![4, 8],
            samples: 500,
            replicates: 3,
            seed: 1,
            family: LogNormalFamily::default(),
        };
        let rows = equivalence_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.metric >= 0.0));
        assert_eq!(rows, equivalence_sweep(&cfg).unwrap());
    }

    #[test]
    fn factorization_small_run() {
        let cfg = FactorizationConfig {
            n_values: vec![4, 16],
            samples: 2000,
            seed: 2,
        };
        let rows = factorization_check(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.cov_first.is_finite() && r.slln_coverage > 0.9));
    }
}
