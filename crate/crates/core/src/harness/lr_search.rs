use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::CostKind;
use crate::error::{Error, Result};
use crate::neural::{train_band, ContextDataset, MlpSpec, TrainConfig, UtteranceData};
use crate::seed;
use crate::signal::NoiseKind;

/// Grid search of the SGD step size for each cost, on a few probe bands at a
/// single envelope length, scored on a dedicated validation condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSearchConfig {
    pub elc_candidates: Vec<f64>,
    pub mse_candidates: Vec<f64>,
    pub n: usize,
    /// 1-based band indices trained for every candidate.
    pub bands: Vec<usize>,
    pub epochs: usize,
    pub noise: NoiseKind,
    pub snr_db: f64,
}

impl Default for LrSearchConfig {
    fn default() -> Self {
        Self {
            elc_candidates: vec![3e-3, 1e-2, 3e-2],
            mse_candidates: vec![5e-5, 3e-4, 1e-3, 3e-3, 1e-2],
            n: 30,
            bands: vec![1, 8, 15],
            epochs: 4,
            noise: NoiseKind::Ssn,
            snr_db: 0.0,
        }
    }
}

impl LrSearchConfig {
    pub fn candidates(&self, cost: CostKind) -> &[f64] {
        match cost {
            CostKind::Elc => &self.elc_candidates,
            CostKind::Mse => &self.mse_candidates,
        }
    }

    pub fn validate(&self, band_count: usize) -> Result<()> {
        for cost in CostKind::BOTH {
            let c = self.candidates(cost);
            if c.is_empty() || c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid(format!("{cost} step candidates must be positive and non-empty")));
            }
        }
        if self.n < 2 || self.epochs == 0 || !self.snr_db.is_finite() {
            return Err(Error::invalid("step search needs N >= 2, at least one epoch and a finite SNR"));
        }
        if self.bands.is_empty() || self.bands.iter().any(|&j| j == 0 || j > band_count) {
            return Err(Error::invalid(format!("probe bands must lie in 1..={band_count}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrCandidate {
    pub cost: CostKind,
    pub learning_rate: f64,
    /// Final validation cost per probe band; None if training diverged.
    pub per_band: Vec<Option<f64>>,
    /// Lower is better. Correlation costs are averaged directly, squared
    /// errors as logarithms since their scale differs across bands.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSearchReport {
    pub candidates: Vec<LrCandidate>,
    pub elc: f64,
    pub mse: f64,
}

impl LrSearchReport {
    pub fn chosen(&self, cost: CostKind) -> f64 {
        match cost {
            CostKind::Elc => self.elc,
            CostKind::Mse => self.mse,
        }
    }
}

fn score(cost: CostKind, per_band: &[Option<f64>]) -> Option<f64> {
    let vals: Option<Vec<f64>> = per_band.iter().copied().collect();
    let vals = vals?;
    let s = match cost {
        CostKind::Elc => vals.iter().sum::<f64>(),
        CostKind::Mse => vals.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).sum::<f64>(),
    } / vals.len() as f64;
    s.is_finite().then_some(s)
}

/// Trains every candidate on the probe bands and picks the best per cost.
/// Diverging candidates are recorded and skipped.
pub fn search_learning_rates(
    cfg: &LrSearchConfig,
    hidden: &[usize],
    base: [&TrainConfig; 2],
    train: &[UtteranceData],
    val: &[UtteranceData],
    master_seed: u64,
) -> Result<LrSearchReport> {
    let bins = train.first().map_or(0, |u| u.features.ncols());
    let band_count = train.first().map_or(0, |u| u.clean_env.bands());
    cfg.validate(band_count)?;
    let spec = MlpSpec::for_context(bins, cfg.n, hidden.to_vec());
    let jobs: Vec<(CostKind, f64, usize)> = CostKind::BOTH
        .iter()
        .flat_map(|&c| cfg.candidates(c).iter().flat_map(move |&lr| cfg.bands.iter().map(move |&j| (c, lr, j))))
        .collect();
    let finals: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(cost, lr, j)| {
            let tr = ContextDataset::new(train, j, cfg.n)?;
            let va = ContextDataset::new(val, j, cfg.n)?;
            let proto = base[if cost == CostKind::Elc { 0 } else { 1 }];
            let tc = TrainConfig {
                learning_rate: lr,
                max_epochs: cfg.epochs,
                seed: seed::derive(seed::derive_str(master_seed, "step_search"), j as u64),
                ..proto.clone()
            };
            match train_band(&spec, &tr, &va, &tc) {
                Ok(out) => Ok(out.log.records.last().map(|r| r.val_cost)),
                Err(Error::InvalidInput(msg)) if msg.contains("diverged") => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut candidates = Vec::new();
    let mut it = finals.into_iter();
    for cost in CostKind::BOTH {
        for &lr in cfg.candidates(cost) {
            let per_band: Vec<Option<f64>> = it.by_ref().take(cfg.bands.len()).collect();
            let score = score(cost, &per_band);
            candidates.push(LrCandidate {
                cost,
                learning_rate: lr,
                per_band,
                score,
            });
        }
    }
    let best = |cost: CostKind| -> Result<f64> {
        candidates
            .iter()
            .filter(|c| c.cost == cost)
            .filter_map(|c| c.score.map(|s| (s, c.learning_rate)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, lr)| lr)
            .ok_or_else(|| Error::invalid(format!("every {cost} step candidate diverged")))
    };
    let (elc, mse) = (best(CostKind::Elc)?, best(CostKind::Mse)?);
    Ok(LrSearchReport { candidates, elc, mse })
}
