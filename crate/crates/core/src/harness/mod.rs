//! Experiment orchestration: corpora, training of both system types across
//! envelope lengths, enhancement, scoring and report emission.

mod config;
mod gains;
mod lr_search;
mod pipeline;
mod report;

pub use config::ExperimentConfig;
pub use gains::{gain_correlation, GainCorrelation};
pub use lr_search::{search_learning_rates, LrCandidate, LrSearchConfig, LrSearchReport};
pub use pipeline::{
    evaluate_condition, run_pipeline, score_utterance, system_dir, test_corpus, train_all, training_corpus,
    SegmentRecord, Split, TrainedSystems, UtteranceScores, SYSTEM_PAIR, UNPROCESSED,
};
pub use report::{emit_report, fmt_sig, ReportFormat, ResultRow, ResultTable, CSV_COLUMNS};
