use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::CostKind;
use crate::error::{Error, Result};
use crate::estimators::{FactorizationConfig, SweepConfig};
use super::lr_search::LrSearchConfig;
use crate::neural::TrainConfig;
use crate::signal::{CorpusSpec, NoiseKind};

/// Full experiment description, read from one JSON file. Missing keys take
/// the desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_list: Vec<usize>,
    pub train_noises: Vec<NoiseKind>,
    pub test_noises: Vec<NoiseKind>,
    pub train_snr_db: (f64, f64),
    pub test_snr_db: Vec<f64>,
    pub train_utterances: usize,
    pub val_utterances: usize,
    pub test_utterances: usize,
    pub duration_s: f64,
    pub hidden: Vec<usize>,
    /// Step-size grid search run before training; when set, its choices
    /// replace the `learning_rate` of `elc` and `mse`.
    pub lr_search: Option<LrSearchConfig>,
    pub elc: TrainConfig,
    pub mse: TrainConfig,
    pub gain_pairs_per_utterance: usize,
    /// Envelope length of the extended STOI score.
    pub stoi_n: usize,
    pub write_enhanced_wavs: bool,
    pub seed: u64,
    /// Estimator distance sweep (`mmelc-sweep`).
    pub sweep: SweepConfig,
    /// Covariance factorization experiment (`appendix-b`).
    pub factorization: FactorizationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_list: vec![4, 7, 15, 20, 30, 40, 50, 80],
            train_noises: NoiseKind::MATCHED.to_vec(),
            test_noises: NoiseKind::ALL.to_vec(),
            train_snr_db: (-5.0, 10.0),
            test_snr_db: vec![-5.0, 0.0, 5.0, 10.0],
            train_utterances: 200,
            val_utterances: 40,
            test_utterances: 60,
            duration_s: 3.0,
            hidden: vec![128, 128, 128],
            lr_search: Some(LrSearchConfig::default()),
            elc: TrainConfig::for_cost(CostKind::Elc),
            mse: TrainConfig::for_cost(CostKind::Mse),
            gain_pairs_per_utterance: 10,
            stoi_n: 30,
            write_enhanced_wavs: false,
            seed: 0,
            sweep: SweepConfig::default(),
            factorization: FactorizationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Sets the master seed and reseeds the theory experiments from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sweep.seed = crate::seed::derive_str(seed, "sweep");
        self.factorization.seed = crate::seed::derive_str(seed, "factorization");
        self
    }

    pub fn train_config(&self, cost: CostKind) -> &TrainConfig {
        match cost {
            CostKind::Elc => &self.elc,
            CostKind::Mse => &self.mse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return Err(Error::invalid("n_list must be non-empty with every N >= 2"));
        }
        if self.train_noises.is_empty() || self.test_noises.is_empty() {
            return Err(Error::invalid("train and test noise lists must be non-empty"));
        }
        if let Some(k) = self.train_noises.iter().find(|k| !k.is_matched()) {
            return Err(Error::invalid(format!("{k} is held out and may not be used for training")));
        }
        if self.train_utterances == 0 || self.val_utterances == 0 || self.test_utterances == 0 {
            return Err(Error::invalid("corpus sizes must be positive"));
        }
        if self.test_snr_db.is_empty() {
            return Err(Error::invalid("test_snr_db must be non-empty"));
        }
        if self.hidden.is_empty() || self.gain_pairs_per_utterance == 0 {
            return Err(Error::invalid("need hidden layers and at least one gain pair"));
        }
        if self.elc.cost != CostKind::Elc || self.mse.cost != CostKind::Mse {
            return Err(Error::invalid("elc/mse training configs must name their own cost"));
        }
        self.elc.validate()?;
        self.mse.validate()?;
        if let Some(search) = &self.lr_search {
            search.validate(crate::bands::BAND_COUNT)?;
        }
        let longest = self
            .n_list
            .iter()
            .copied()
            .chain([self.stoi_n])
            .chain(self.lr_search.as_ref().map(|s| s.n))
            .max()
            .unwrap_or(2);
        CorpusSpec {
            num_utterances: 1,
            duration_s: self.duration_s,
            seed: self.seed,
            noise_kind: self.train_noises[0],
            snr_db_lo: self.train_snr_db.0,
            snr_db_hi: self.train_snr_db.1,
        }
        .validate_for(longest)
    }
}
