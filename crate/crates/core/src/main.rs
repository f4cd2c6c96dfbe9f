use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stoi_mse::bands::{band_envelope, BandLayout};
use stoi_mse::costs::{gradcheck, CostKind};
use stoi_mse::estimators::{equivalence_sweep, factorization_check};
use stoi_mse::harness::{run_pipeline, test_corpus, train_all, training_corpus, ExperimentConfig, Split};
use stoi_mse::intelligibility::{approximate_stoi, extended_stoi_with_clipping};
use stoi_mse::neural::load_system;
use stoi_mse::signal::{mix_at_snr, read_wav, write_wav, PIPELINE_RATE_HZ};
use stoi_mse::stft::{stft_analyze, StftConfig};
use stoi_mse::{Result, StageExt};

#[derive(Parser)]
#[command(name = "stoi-mse", version, about = "Correlation vs. MSE trained speech enhancement")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON). Missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the one in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes the train, validation and test corpora as WAV files.
    SynthCorpus,
    /// Mixes a clean file with a noise file at a given SNR.
    Mix {
        clean: PathBuf,
        noise: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: f64,
        #[arg(long, default_value = "noisy.wav")]
        output: String,
    },
    /// Trains both system types for every configured N.
    Train,
    /// Enhances a noisy file with a trained system directory.
    Enhance {
        system: PathBuf,
        input: PathBuf,
        #[arg(long, default_value = "enhanced.wav")]
        output: String,
    },
    /// Scores a processed file against its clean reference.
    Score {
        clean: PathBuf,
        processed: PathBuf,
        /// Envelope length; defaults to the configured STOI length.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Full experiment: corpora, training, enhancement, scoring, tables.
    Sweep,
    /// Compares analytic and finite-difference gradients of both costs.
    Gradcheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 30, 80])]
        n: Vec<usize>,
    },
    /// Distance between the correlation-optimal and MMSE estimators versus N.
    MmelcSweep,
    /// Covariance factorization experiment.
    AppendixB,
    /// Writes the one-third octave band table.
    BandTable,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::SynthCorpus => "synth-corpus",
            Cmd::Mix { .. } => "mix",
            Cmd::Train => "train",
            Cmd::Enhance { .. } => "enhance",
            Cmd::Score { .. } => "score",
            Cmd::Sweep => "sweep",
            Cmd::Gradcheck { .. } => "gradcheck",
            Cmd::MmelcSweep => "mmelc-sweep",
            Cmd::AppendixB => "appendix-b",
            Cmd::BandTable => "band-table",
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn write_csv_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn synth_corpus(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut manifest = Vec::new();
    let mut dump = |dir: PathBuf, items: Vec<(stoi_mse::signal::CorpusItem, stoi_mse::harness::SegmentRecord)>| -> Result<()> {
        fs::create_dir_all(&dir)?;
        for (item, rec) in items {
            let stem = format!("utt_{:04}", rec.index);
            write_wav(&item.clean, dir.join(format!("{stem}_clean.wav")))?;
            write_wav(&item.noisy, dir.join(format!("{stem}_noisy.wav")))?;
            manifest.push(rec);
        }
        Ok(())
    };
    dump(out.join("corpus/train"), training_corpus(cfg, Split::Train)?)?;
    dump(out.join("corpus/val"), training_corpus(cfg, Split::Val)?)?;
    for &noise in &cfg.test_noises {
        for &snr in &cfg.test_snr_db {
            let dir = out.join(format!("corpus/test/{}_{snr}dB", noise.label()));
            dump(dir, test_corpus(cfg, noise, snr)?)?;
        }
    }
    write_json(&out.join("corpus/manifest.json"), &manifest)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common).stage("config")?;
    let out = cli.common.out_dir.as_path();
    let stft = StftConfig::default();
    match cli.cmd {
        Cmd::SynthCorpus => synth_corpus(&cfg, out).stage("corpus")?,
        Cmd::Mix {
            clean,
            noise,
            snr_db,
            output,
        } => {
            let x = read_wav(&clean).stage("mix")?;
            let v = read_wav(&noise).stage("mix")?;
            let m = mix_at_snr(&x, &v, snr_db, cfg.seed).stage("mix")?;
            fs::create_dir_all(out)?;
            write_wav(&m.noisy, out.join(&output)).stage("mix")?;
            log::info!("noise offset {} samples", m.offset);
        }
        Cmd::Train => {
            train_all(&cfg, out)?;
        }
        Cmd::Enhance { system, input, output } => {
            let sys = load_system(&system).stage("enhance")?;
            let noisy = read_wav(&input).stage("enhance")?;
            let enhanced = sys.enhance(&noisy).stage("enhance")?;
            fs::create_dir_all(out)?;
            let clipped = write_wav(&enhanced, out.join(&output)).stage("enhance")?;
            if clipped > 0 {
                log::warn!("{clipped} samples clipped on write");
            }
        }
        Cmd::Score { clean, processed, n } => {
            let n = n.unwrap_or(cfg.stoi_n);
            let layout = BandLayout::for_stft(&stft, PIPELINE_RATE_HZ).stage("score")?;
            let env = |p: &Path| -> Result<_> { band_envelope(&stft_analyze(&read_wav(p)?, &stft)?, &layout) };
            let c = env(&clean).stage("score")?;
            let p = env(&processed).stage("score")?;
            let frames = c.frames().min(p.frames());
            let trim = |e: &stoi_mse::bands::EnvelopeMatrix| {
                stoi_mse::bands::EnvelopeMatrix::new(e.values().slice(ndarray::s![.., ..frames]).to_owned())
            };
            let (c, p) = (trim(&c).stage("score")?, trim(&p).stage("score")?);
            let approx = approximate_stoi(&c, &p, n).stage("score")?;
            let ext = extended_stoi_with_clipping(&c, &p, n).stage("score")?;
            println!("approximate STOI {:.4}", approx.d);
            println!(
                "extended STOI    {:.4} ({} clipped values, {} constant windows)",
                ext.d, ext.clipped_values, ext.constant_windows
            );
            fs::create_dir_all(out)?;
            fs::write(out.join("score.json"), ext.to_json()?).stage("score")?;
        }
        Cmd::Sweep => {
            let table = run_pipeline(&cfg, out)?;
            log::info!("{} result rows written to {}", table.len(), out.display());
        }
        Cmd::Gradcheck { trials, n } => {
            let mut reports = Vec::new();
            for kind in CostKind::BOTH {
                for &len in &n {
                    let seed = stoi_mse::seed::derive(stoi_mse::seed::derive_str(cfg.seed, kind.label()), len as u64);
                    let r = gradcheck(kind, trials, len, seed).stage("gradcheck")?;
                    println!(
                        "{:<4} N={:<3} max rel err {:.3e} mean {:.3e} skipped {}",
                        kind, len, r.max_rel_err, r.mean_rel_err, r.skipped
                    );
                    reports.push(r);
                }
            }
            write_json(&out.join("gradcheck.json"), &reports).stage("gradcheck")?;
        }
        Cmd::MmelcSweep => {
            let rows = equivalence_sweep(&cfg.sweep).stage("mmelc-sweep")?;
            for r in &rows {
                println!("N={:<4} 1-rho {:.6} (se {:.6})", r.n, r.metric, r.stderr);
            }
            write_csv_rows(&out.join("mmelc_sweep.csv"), &rows).stage("mmelc-sweep")?;
        }
        Cmd::AppendixB => {
            let rows = factorization_check(&cfg.factorization).stage("appendix-b")?;
            for r in &rows {
                println!(
                    "N={:<4} cov(Z1) {:+.3e} (se {:.1e}) cov(Zmid) {:+.3e} (se {:.1e}) coverage {:.4}",
                    r.n, r.cov_first, r.cov_first_stderr, r.cov_mid, r.cov_mid_stderr, r.slln_coverage
                );
            }
            write_csv_rows(&out.join("factorization.csv"), &rows).stage("appendix-b")?;
        }
        Cmd::BandTable => {
            let layout = BandLayout::for_stft(&stft, PIPELINE_RATE_HZ).stage("band-table")?;
            fs::create_dir_all(out)?;
            layout
                .write_csv(fs::File::create(out.join("bands.csv"))?)
                .stage("band-table")?;
            layout.write_csv(std::io::stdout()).stage("band-table")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let name = cli.cmd.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = e.stage().unwrap_or(name);
            eprintln!("stoi-mse {name} failed at stage {stage}: {e}");
            ExitCode::from(2)
        }
    }
}
