//! Feedforward gain estimators and their SGD trainer.
//!
//! Each band of an enhancement system has its own network mapping a context
//! of noisy spectra to N gains in (0, 1).

mod checkpoint;
mod mlp;
mod system;
mod train;

pub use checkpoint::{load_network, load_system, save_network, save_system, CheckpointHeader};
pub use mlp::{ForwardCache, Gradients, Layer, Mlp, MlpSpec};
pub use system::{
    analyze_pair, average_window_gains, train_system, ContextDataset, EnhancementSystem, FeatureNormalizer,
    PairAnalysis, SystemSetup, UtteranceData, WindowGains,
};
pub use train::{evaluate, train_band, DenseDataset, EpochRecord, TrainConfig, TrainLog, TrainedBand, WindowDataset, LOG_NOTE};
