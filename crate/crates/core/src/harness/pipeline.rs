use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::gains::gain_correlation;
use super::lr_search::{search_learning_rates, LrSearchReport};
use super::report::{emit_report, ReportFormat, ResultRow, ResultTable};
use crate::bands::{band_envelope, BandLayout, EnvelopeMatrix};
use crate::costs::CostKind;
use crate::error::{Error, Result, StageExt};
use crate::intelligibility::{elc, elc_difference_profile, extended_stoi_with_clipping};
use crate::neural::{
    analyze_pair, average_window_gains, load_system, save_system, train_system, EnhancementSystem, FeatureNormalizer,
    PairAnalysis, SystemSetup, UtteranceData,
};
use crate::seed;
use crate::signal::{write_wav, CorpusItem, CorpusSpec, NoiseKind, PIPELINE_RATE_HZ};
use crate::stats::{self, MeanCi};
use crate::stft::{apply_gain_with_noisy_phase, stft_analyze, stft_synthesize, StftConfig};

pub const SYSTEM_PAIR: &str = "ELC-MSE";
pub const UNPROCESSED: &str = "unprocessed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    /// Validation utterances for the step-size search.
    Tune,
    Test,
}

impl Split {
    fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Tune => "tune",
            Split::Test => "test",
        }
    }
}

/// Bookkeeping for one generated utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub split: Split,
    pub index: usize,
    pub noise: NoiseKind,
    pub seed: u64,
    pub snr_db: f64,
}

/// Generates one utterance of a split. Training and validation cycle
/// through `noises`; test utterances use the single kind given.
fn utterance(
    master: u64,
    split: Split,
    index: usize,
    noise: NoiseKind,
    snr: (f64, f64),
    duration_s: f64,
) -> Result<(CorpusItem, SegmentRecord)> {
    let unit = seed::derive(seed::derive_str(master, split.label()), index as u64);
    let spec = CorpusSpec {
        num_utterances: 1,
        duration_s,
        seed: unit,
        noise_kind: noise,
        snr_db_lo: snr.0,
        snr_db_hi: snr.1,
    };
    let item = spec.generate()?.pop().expect("one utterance requested");
    let record = SegmentRecord {
        split,
        index,
        noise,
        seed: unit,
        snr_db: item.snr_db,
    };
    Ok((item, record))
}

/// Training or validation corpus, noise kinds assigned round robin.
pub fn training_corpus(cfg: &ExperimentConfig, split: Split) -> Result<Vec<(CorpusItem, SegmentRecord)>> {
    let count = match split {
        Split::Train => cfg.train_utterances,
        Split::Val => cfg.val_utterances,
        Split::Tune | Split::Test => return Err(Error::invalid("tuning and test corpora are built per noise and SNR")),
    };
    (0..count)
        .into_par_iter()
        .map(|i| {
            let noise = cfg.train_noises[i % cfg.train_noises.len()];
            utterance(cfg.seed, split, i, noise, cfg.train_snr_db, cfg.duration_s)
        })
        .collect()
}

/// Test corpus for one noise kind at one SNR. The clean utterances are the
/// same for every noise and SNR.
pub fn test_corpus(cfg: &ExperimentConfig, noise: NoiseKind, snr_db: f64) -> Result<Vec<(CorpusItem, SegmentRecord)>> {
    (0..cfg.test_utterances)
        .into_par_iter()
        .map(|i| utterance(cfg.seed, Split::Test, i, noise, (snr_db, snr_db), cfg.duration_s))
        .collect()
}

fn to_training_data(pairs: &[PairAnalysis], normalizer: &FeatureNormalizer) -> Result<Vec<UtteranceData>> {
    pairs
        .iter()
        .map(|p| {
            Ok(UtteranceData {
                features: normalizer.transform(&p.noisy_mags)?,
                clean_env: p.clean_env.clone(),
                noisy_env: p.noisy_env.clone(),
            })
        })
        .collect()
}

pub fn system_dir(out_dir: &Path, cost: CostKind, n: usize) -> PathBuf {
    out_dir.join("systems").join(format!("{}_N{n}", cost.label()))
}

/// Trained systems for every N, keyed by (cost, N) in config order.
pub struct TrainedSystems {
    pub systems: Vec<(CostKind, usize, EnhancementSystem)>,
}

impl TrainedSystems {
    pub fn get(&self, cost: CostKind, n: usize) -> Option<&EnhancementSystem> {
        self.systems.iter().find(|(c, m, _)| *c == cost && *m == n).map(|(_, _, s)| s)
    }
}

/// Trains (or reloads from `out_dir`) both systems for every N.
pub fn train_all(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainedSystems> {
    cfg.validate()?;
    let stft = StftConfig::default();
    let layout = BandLayout::for_stft(&stft, PIPELINE_RATE_HZ)?;
    let wanted: Vec<(CostKind, usize)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| CostKind::BOTH.map(|c| (c, n)))
        .collect();
    let all_cached = wanted
        .iter()
        .all(|&(c, n)| system_dir(out_dir, c, n).join("system.json").exists());
    let mut prepared: Option<(Vec<UtteranceData>, Vec<UtteranceData>, FeatureNormalizer)> = None;
    if !all_cached {
        let train = training_corpus(cfg, Split::Train).stage("corpus")?;
        let val = training_corpus(cfg, Split::Val).stage("corpus")?;
        let manifest: Vec<&SegmentRecord> = train.iter().chain(&val).map(|(_, r)| r).collect();
        fs::create_dir_all(out_dir).stage("corpus")?;
        fs::write(out_dir.join("training_manifest.json"), serde_json::to_string_pretty(&manifest)?)
            .stage("corpus")?;
        let analyze = |items: &[(CorpusItem, SegmentRecord)]| -> Result<Vec<PairAnalysis>> {
            items
                .par_iter()
                .map(|(it, _)| analyze_pair(&it.clean, &it.noisy, &stft, &layout))
                .collect()
        };
        let train_pairs = analyze(&train).stage("features")?;
        let val_pairs = analyze(&val).stage("features")?;
        let normalizer = FeatureNormalizer::fit(train_pairs.iter().map(|p| &p.noisy_mags)).stage("features")?;
        prepared = Some((
            to_training_data(&train_pairs, &normalizer).stage("features")?,
            to_training_data(&val_pairs, &normalizer).stage("features")?,
            normalizer,
        ));
    }
    let steps = match (&cfg.lr_search, &prepared) {
        (Some(search), Some((train, _, normalizer))) => Some(step_search(cfg, search, train, normalizer, out_dir)?),
        _ => None,
    };
    let mut systems = Vec::with_capacity(wanted.len());
    for (cost, n) in wanted {
        let dir = system_dir(out_dir, cost, n);
        let system = if dir.join("system.json").exists() {
            log::info!("reusing {}", dir.display());
            load_system(&dir).stage("train")?
        } else {
            let (train, val, normalizer) = prepared.as_ref().expect("prepared when anything is missing");
            log::info!("training {cost} systems for N={n}");
            let setup = SystemSetup {
                hidden: cfg.hidden.clone(),
                n,
                stft,
                layout: layout.clone(),
                normalizer: normalizer.clone(),
            };
            let base = cfg.train_config(cost);
            let train_cfg = crate::neural::TrainConfig {
                seed: seed::derive(seed::derive_str(cfg.seed, cost.label()), n as u64),
                learning_rate: steps.as_ref().map_or(base.learning_rate, |s| s.chosen(cost)),
                ..base.clone()
            };
            let (system, logs) = train_system(&setup, train, val, &train_cfg).stage("train")?;
            save_system(&dir, &system, train_cfg.seed).stage("train")?;
            for (j, l) in logs.iter().enumerate() {
                l.write_csv(fs::File::create(dir.join(format!("train_log_band_{:02}.csv", j + 1)))?)
                    .stage("train")?;
            }
            system
        };
        systems.push((cost, n, system));
    }
    Ok(TrainedSystems { systems })
}

/// Runs (or reloads) the step-size search. Its validation set is a separate
/// corpus in the configured noise at a fixed SNR.
fn step_search(
    cfg: &ExperimentConfig,
    search: &super::lr_search::LrSearchConfig,
    train: &[UtteranceData],
    normalizer: &FeatureNormalizer,
    out_dir: &Path,
) -> Result<LrSearchReport> {
    let path = out_dir.join("lr_search.json");
    if path.exists() {
        return serde_json::from_str(&fs::read_to_string(&path)?).stage("tune");
    }
    let stft = StftConfig::default();
    let layout = BandLayout::for_stft(&stft, PIPELINE_RATE_HZ)?;
    let items: Vec<(CorpusItem, SegmentRecord)> = (0..cfg.val_utterances)
        .into_par_iter()
        .map(|i| {
            utterance(
                cfg.seed,
                Split::Tune,
                i,
                search.noise,
                (search.snr_db, search.snr_db),
                cfg.duration_s,
            )
        })
        .collect::<Result<_>>()
        .stage("tune")?;
    let pairs: Vec<PairAnalysis> = items
        .par_iter()
        .map(|(it, _)| analyze_pair(&it.clean, &it.noisy, &stft, &layout))
        .collect::<Result<_>>()
        .stage("tune")?;
    let val = to_training_data(&pairs, normalizer).stage("tune")?;
    log::info!("searching step sizes on {} bands at N={}", search.bands.len(), search.n);
    let report = search_learning_rates(search, &cfg.hidden, [&cfg.elc, &cfg.mse], train, &val, cfg.seed).stage("tune")?;
    log::info!("chosen step sizes: ELC {:e}, MSE {:e}", report.elc, report.mse);
    fs::write(&path, serde_json::to_string_pretty(&report)?).stage("tune")?;
    Ok(report)
}

/// Scores of one system on one test utterance.
#[derive(Debug, Clone)]
pub struct UtteranceScores {
    /// Mean window ELC per band, computed on the networks' direct outputs.
    pub elc_per_band: Vec<f64>,
    /// Extended STOI of the reconstructed signal.
    pub stoi: f64,
    /// Frame-averaged gains, bands x frames.
    pub frame_gains: EnvelopeMatrix,
}

/// Mean over windows of `rho(clean window, gain * noisy window)`; constant
/// windows contribute 0.
fn window_elc(clean: &EnvelopeMatrix, noisy: &EnvelopeMatrix, window_gains: &[ndarray::Array2<f64>]) -> Result<Vec<f64>> {
    window_gains
        .iter()
        .enumerate()
        .map(|(jb, w)| {
            let n = w.ncols();
            let c = clean.band_row(jb + 1)?;
            let r = noisy.band_row(jb + 1)?;
            let mut rhos = Vec::with_capacity(w.nrows());
            for (start, g) in w.rows().into_iter().enumerate() {
                let a: Vec<f64> = (start..start + n).map(|m| c[m]).collect();
                let est: Vec<f64> = (start..start + n).zip(g.iter()).map(|(m, gv)| gv * r[m]).collect();
                rhos.push(match elc(&a, &est) {
                    Ok(v) => v,
                    Err(Error::UndefinedCorrelation) => 0.0,
                    Err(e) => return Err(e),
                });
            }
            Ok(stats::mean(&rhos))
        })
        .collect()
}

pub fn score_utterance(
    system: &EnhancementSystem,
    clean_env: &EnvelopeMatrix,
    noisy: &crate::stft::Spectrogram,
    noisy_env: &EnvelopeMatrix,
    stoi_n: usize,
) -> Result<(UtteranceScores, crate::signal::Waveform)> {
    let windows = system.window_gains(noisy)?;
    let elc_per_band = window_elc(clean_env, noisy_env, &windows)?;
    let frame_gains = average_window_gains(&windows, noisy.frames())?;
    let enhanced_spec = apply_gain_with_noisy_phase(noisy, &system.layout.broadcast_gains(&frame_gains)?)?;
    let enhanced = stft_synthesize(&enhanced_spec)?;
    let enhanced_env = band_envelope(&stft_analyze(&enhanced, &system.stft)?, &system.layout)?;
    let stoi = extended_stoi_with_clipping(clean_env, &enhanced_env, stoi_n)?.d;
    Ok((
        UtteranceScores {
            elc_per_band,
            stoi,
            frame_gains,
        },
        enhanced,
    ))
}

fn ci_row(system: &str, noise: &str, snr: f64, n: usize, metric: &str, xs: &[f64]) -> ResultRow {
    match MeanCi::from_samples(xs) {
        Ok(ci) => ResultRow::from_ci(system, noise, snr, n, metric, &ci),
        Err(_) => ResultRow::point(system, noise, snr, n, metric, stats::mean(xs), xs.len()),
    }
}

fn snr_tag(snr: f64) -> String {
    format!("{snr}").replace('-', "m").replace('.', "p")
}

/// Evaluates every N on one (noise, SNR) test corpus.
pub fn evaluate_condition(
    cfg: &ExperimentConfig,
    systems: &TrainedSystems,
    noise: NoiseKind,
    snr_db: f64,
    out_dir: &Path,
) -> Result<Vec<ResultRow>> {
    let stft = StftConfig::default();
    let layout = BandLayout::for_stft(&stft, PIPELINE_RATE_HZ)?;
    let corpus = test_corpus(cfg, noise, snr_db)?;
    let label = noise.label();
    let analyzed: Vec<(EnvelopeMatrix, crate::stft::Spectrogram, EnvelopeMatrix)> = corpus
        .iter()
        .map(|(it, _)| {
            let cs = stft_analyze(&it.clean, &stft)?;
            let ns = stft_analyze(&it.noisy, &stft)?;
            Ok((band_envelope(&cs, &layout)?, band_envelope(&ns, &layout)?, ns))
        })
        .map(|r: Result<_>| r.map(|(c, e, s)| (c, s, e)))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let unprocessed: Vec<f64> = analyzed
        .iter()
        .map(|(c, _, e)| extended_stoi_with_clipping(c, e, cfg.stoi_n).map(|r| r.d))
        .collect::<Result<_>>()?;
    rows.push(ci_row(UNPROCESSED, label, snr_db, 0, "STOI", &unprocessed));

    for &n in &cfg.n_list {
        let mut per_cost: Vec<Vec<UtteranceScores>> = Vec::with_capacity(2);
        for cost in CostKind::BOTH {
            let system = systems
                .get(cost, n)
                .ok_or_else(|| Error::invalid(format!("no {cost} system for N={n}")))?;
            let scored: Vec<(UtteranceScores, crate::signal::Waveform)> = analyzed
                .par_iter()
                .map(|(c, s, e)| score_utterance(system, c, s, e, cfg.stoi_n))
                .collect::<Result<_>>()?;
            if cfg.write_enhanced_wavs {
                let dir = out_dir
                    .join("enhanced")
                    .join(format!("{}_N{n}", cost.label()))
                    .join(format!("{label}_{}", snr_tag(snr_db)));
                fs::create_dir_all(&dir)?;
                for (i, (_, w)) in scored.iter().enumerate() {
                    write_wav(w, dir.join(format!("utt_{i:04}.wav")))?;
                }
            }
            let scores: Vec<UtteranceScores> = scored.into_iter().map(|(s, _)| s).collect();
            let elc_all: Vec<f64> = scores.iter().flat_map(|s| s.elc_per_band.iter().copied()).collect();
            let stoi_all: Vec<f64> = scores.iter().map(|s| s.stoi).collect();
            rows.push(ci_row(cost.label(), label, snr_db, n, "ELC", &elc_all));
            rows.push(ci_row(cost.label(), label, snr_db, n, "STOI", &stoi_all));
            per_cost.push(scores);
        }
        let (elc_sys, mse_sys) = (&per_cost[0], &per_cost[1]);
        let a: Vec<f64> = elc_sys.iter().flat_map(|s| s.elc_per_band.iter().copied()).collect();
        let b: Vec<f64> = mse_sys.iter().flat_map(|s| s.elc_per_band.iter().copied()).collect();
        match elc_difference_profile(&a, &b) {
            Ok(ci) => rows.push(ResultRow::from_ci(SYSTEM_PAIR, label, snr_db, n, "ELC_diff", &ci)),
            Err(_) => rows.push(ResultRow::point(
                SYSTEM_PAIR,
                label,
                snr_db,
                n,
                "ELC_diff",
                stats::mean(&a) - stats::mean(&b),
                a.len(),
            )),
        }
        let ga: Vec<EnvelopeMatrix> = elc_sys.iter().map(|s| s.frame_gains.clone()).collect();
        let gb: Vec<EnvelopeMatrix> = mse_sys.iter().map(|s| s.frame_gains.clone()).collect();
        let gc_seed = seed::derive(seed::derive_str(seed::derive_str(cfg.seed, "gain_pairs"), label), n as u64);
        match gain_correlation(&ga, &gb, cfg.gain_pairs_per_utterance, gc_seed) {
            Ok(gc) => {
                rows.push(ResultRow::point(SYSTEM_PAIR, label, snr_db, n, "gain_corr", gc.pooled, gc.pairs));
                let per_band_pairs = gc.pairs / gc.per_band.len();
                for (j, r) in gc.per_band.iter().enumerate() {
                    let metric = format!("gain_corr_b{:02}", j + 1);
                    rows.push(ResultRow::point(SYSTEM_PAIR, label, snr_db, n, &metric, *r, per_band_pairs));
                }
            }
            Err(e) => log::warn!("gain correlation undefined for {label} at {snr_db} dB, N={n}: {e}"),
        }
    }
    Ok(rows)
}

/// Full experiment: corpora, training of both systems for every N,
/// enhancement and scoring of every test condition, report emission.
/// Trained systems and per-condition scores found in `out_dir` are reused.
pub fn run_pipeline(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ResultTable> {
    cfg.validate().stage("config")?;
    fs::create_dir_all(out_dir).stage("config")?;
    fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(cfg)?).stage("config")?;
    let systems = train_all(cfg, out_dir)?;
    let scores_dir = out_dir.join("scores");
    fs::create_dir_all(&scores_dir).stage("evaluate")?;
    let mut table = ResultTable::new();
    for &noise in &cfg.test_noises {
        for &snr in &cfg.test_snr_db {
            let cache = scores_dir.join(format!("{}_{}.json", noise.label(), snr_tag(snr)));
            let rows = if cache.exists() {
                serde_json::from_str::<Vec<ResultRow>>(&fs::read_to_string(&cache)?).stage("evaluate")?
            } else {
                log::info!("evaluating {noise} at {snr} dB");
                let rows = evaluate_condition(cfg, &systems, noise, snr, out_dir).stage("evaluate")?;
                fs::write(&cache, serde_json::to_string(&rows)?).stage("evaluate")?;
                rows
            };
            table.extend(rows).stage("report")?;
        }
    }
    emit_report(&table, out_dir, "results", &[ReportFormat::Csv, ReportFormat::Json]).stage("report")?;
    Ok(table)
}
