//! Trains one band network with each cost on a small synthetic corpus and
//! prints the validation curve.
//!
//! cargo run --release --example train_band -- [band] [N] [epochs]

use std::time::Instant;

use stoi_mse::bands::BandLayout;
use stoi_mse::costs::CostKind;
use stoi_mse::neural::{analyze_pair, train_band, ContextDataset, FeatureNormalizer, MlpSpec, TrainConfig, UtteranceData};
use stoi_mse::signal::{CorpusSpec, NoiseKind, PIPELINE_RATE_HZ};
use stoi_mse::stft::StftConfig;

fn corpus(n: usize, seed: u64) -> stoi_mse::Result<Vec<(stoi_mse::signal::Waveform, stoi_mse::signal::Waveform)>> {
    let mut out = Vec::new();
    for (i, kind) in NoiseKind::MATCHED.into_iter().enumerate() {
        let spec = CorpusSpec {
            num_utterances: n / 4,
            duration_s: 3.0,
            seed: seed + i as u64,
            noise_kind: kind,
            snr_db_lo: -5.0,
            snr_db_hi: 10.0,
        };
        out.extend(spec.generate()?.into_iter().map(|it| (it.clean, it.noisy)));
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let band = args.first().copied().unwrap_or(8);
    let n = args.get(1).copied().unwrap_or(15);
    let epochs = args.get(2).copied().unwrap_or(5);

    let stft = StftConfig::default();
    let layout = BandLayout::for_stft(&stft, PIPELINE_RATE_HZ)?;
    let analyze = |pairs: Vec<(_, _)>| -> stoi_mse::Result<Vec<_>> {
        pairs.iter().map(|(c, y)| analyze_pair(c, y, &stft, &layout)).collect()
    };
    let train = analyze(corpus(80, 1)?)?;
    let val = analyze(corpus(20, 100)?)?;
    let normalizer = FeatureNormalizer::fit(train.iter().map(|p| &p.noisy_mags))?;
    let to_data = |v: &[stoi_mse::neural::PairAnalysis]| -> stoi_mse::Result<Vec<UtteranceData>> {
        v.iter()
            .map(|p| {
                Ok(UtteranceData {
                    features: normalizer.transform(&p.noisy_mags)?,
                    clean_env: p.clean_env.clone(),
                    noisy_env: p.noisy_env.clone(),
                })
            })
            .collect()
    };
    let (train, val) = (to_data(&train)?, to_data(&val)?);
    let tr = ContextDataset::new(&train, band, n)?;
    let va = ContextDataset::new(&val, band, n)?;
    let spec = MlpSpec::for_context(stft.bins(), n, vec![128, 128, 128]);
    for cost in CostKind::BOTH {
        let cfg = TrainConfig {
            max_epochs: epochs,
            ..TrainConfig::for_cost(cost)
        };
        let t = Instant::now();
        let out = train_band(&spec, &tr, &va, &cfg)?;
        println!("{cost}: {} examples, {:.1} s", stoi_mse::neural::WindowDataset::len(&tr), t.elapsed().as_secs_f64());
        for r in &out.log.records {
            println!("  epoch {:>3} train {:>12.6} val {:>12.6} lr {:.2e}", r.epoch, r.train_cost, r.val_cost, r.lr);
        }
    }
    Ok(())
}
