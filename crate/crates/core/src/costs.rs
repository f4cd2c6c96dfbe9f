//! Training costs with analytic gradients, and a finite-difference check.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostKind {
    #[serde(rename = "ELC")]
    Elc,
    #[serde(rename = "MSE")]
    Mse,
}

impl CostKind {
    pub const BOTH: [CostKind; 2] = [CostKind::Elc, CostKind::Mse];

    pub fn label(self) -> &'static str {
        match self {
            CostKind::Elc => "ELC",
            CostKind::Mse => "MSE",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ELC" => Ok(CostKind::Elc),
            "MSE" => Ok(CostKind::Mse),
            other => Err(Error::invalid(format!("unknown cost {other:?}"))),
        }
    }
}

/// A cost value with its gradient with respect to the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEval {
    pub value: f64,
    pub gradient: Vec<f64>,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// ELC `L(a, est)` and its gradient with respect to `est` (ascent direction).
pub fn elc_cost_grad(a: &[f64], est: &[f64]) -> Result<CostEval> {
    check_lengths(a, est)?;
    if a.len() < 2 {
        return Err(Error::invalid("ELC needs N >= 2"));
    }
    let ac = stats::center(a);
    let ec = stats::center(est);
    let (na, ne) = (stats::norm(&ac), stats::norm(&ec));
    if na == 0.0 || ne == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    let inner = stats::dot(&ac, &ec);
    if inner == 0.0 {
        return Err(Error::OrthogonalDegenerate);
    }
    let value = inner / (na * ne);
    let first = value / inner;
    let second = value / (ne * ne);
    let gradient = ac.iter().zip(&ec).map(|(x, y)| first * x - second * y).collect();
    Ok(CostEval { value, gradient })
}

/// `J = |a - est|^2 / N` and `dJ/d est = -(2/N)(a - est)`.
pub fn mse_cost_grad(a: &[f64], est: &[f64]) -> Result<CostEval> {
    check_lengths(a, est)?;
    if a.is_empty() {
        return Err(Error::invalid("MSE needs at least one value"));
    }
    let n = a.len() as f64;
    let diff: Vec<f64> = a.iter().zip(est).map(|(x, y)| x - y).collect();
    let value = stats::dot(&diff, &diff) / n;
    let gradient = diff.iter().map(|d| -2.0 / n * d).collect();
    Ok(CostEval { value, gradient })
}

/// Cost and gradient in the minimization convention: ELC is negated, MSE is
/// returned as is, so one descent loop serves both.
pub fn descent_cost_grad(kind: CostKind, a: &[f64], est: &[f64]) -> Result<CostEval> {
    match kind {
        CostKind::Elc => {
            let mut e = elc_cost_grad(a, est)?;
            e.value = -e.value;
            e.gradient.iter_mut().for_each(|g| *g = -*g);
            Ok(e)
        }
        CostKind::Mse => mse_cost_grad(a, est),
    }
}

/// Gradient with respect to gains when `est = g * r` element-wise.
pub fn chain_through_gain(r: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    check_lengths(r, upstream)?;
    Ok(r.iter().zip(upstream).map(|(x, u)| x * u).collect())
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference<F>(x: &[f64], h: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// `max |g - g_fd| / max(|g|_inf, |g_fd|_inf)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = inf(analytic).max(inf(numeric));
    if scale == 0.0 {
        return 0.0;
    }
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / scale
}

/// Finite-difference step per cost. Central differences are exact for a
/// quadratic up to rounding, so MSE can use a larger step.
pub fn default_step(kind: CostKind) -> f64 {
    match kind {
        CostKind::Elc => 1e-6,
        CostKind::Mse => 1e-4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub cost: CostKind,
    pub trials: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub skipped: usize,
}

const MAX_REDRAWS: usize = 1000;

fn one_trial(kind: CostKind, n: usize, trial_seed: u64) -> Result<(f64, usize)> {
    let mut rng = seed::rng(trial_seed);
    let h = default_step(kind);
    for skipped in 0..MAX_REDRAWS {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let est: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let analytic = match descent_cost_grad(kind, &a, &est) {
            Ok(e) => e.gradient,
            Err(Error::UndefinedCorrelation | Error::OrthogonalDegenerate) => continue,
            Err(e) => return Err(e),
        };
        let numeric = finite_difference(&est, h, |x| descent_cost_grad(kind, &a, x).map(|e| e.value));
        match numeric {
            Ok(g) => return Ok((relative_error(&analytic, &g), skipped)),
            Err(Error::UndefinedCorrelation | Error::OrthogonalDegenerate) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::invalid("could not draw a non-degenerate pair"))
}

/// Randomized analytic-versus-finite-difference comparison. Draws with an
/// undefined cost are redrawn and counted in `skipped`.
pub fn gradcheck(kind: CostKind, trials: usize, n: usize, seed: u64) -> Result<GradcheckReport> {
    if trials == 0 {
        return Err(Error::invalid("gradcheck needs at least one trial"));
    }
    if n < 2 {
        return Err(Error::invalid("gradcheck needs N >= 2"));
    }
    let base = seed::derive_str(seed, kind.label());
    let results: Vec<(f64, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| one_trial(kind, n, seed::derive(base, t as u64)))
        .collect::<Result<_>>()?;
    let errs: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(GradcheckReport {
        cost: kind,
        trials,
        n,
        max_rel_err: errs.iter().cloned().fold(0.0, f64::max),
        mean_rel_err: stats::mean(&errs),
        skipped: results.iter().map(|r| r.1).sum(),
    })
}
