use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpSpec};
use super::train::{train_band, TrainConfig, TrainLog, WindowDataset};
use crate::bands::{band_envelope, BandLayout, EnvelopeMatrix};
use crate::costs::CostKind;
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::Waveform;
use crate::stft::{apply_gain_with_noisy_phase, stft_analyze, stft_synthesize, Spectrogram, StftConfig};

/// Magnitude floor before taking logs.
const LOG_FLOOR: f64 = 1e-6;

/// Per-bin standardization of log magnitudes, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    /// Fits on frames x bins magnitude matrices.
    pub fn fit<'a>(mags: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for m in mags {
            if sum.is_empty() {
                sum = vec![0.0; m.ncols()];
                sq = vec![0.0; m.ncols()];
            }
            if m.ncols() != sum.len() {
                return Err(Error::DimensionMismatch {
                    expected: sum.len(),
                    got: m.ncols(),
                });
            }
            for row in m.rows() {
                for (k, v) in row.iter().enumerate() {
                    let l = (v + LOG_FLOOR).ln();
                    sum[k] += l;
                    sq[k] += l * l;
                }
                count += 1;
            }
        }
        if count < 2 {
            return Err(Error::invalid("need at least two frames to fit features"));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| ((q / n - m * m).max(0.0)).sqrt().max(1e-6))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, mags: &Array2<f64>) -> Result<Array2<f64>> {
        if mags.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: mags.ncols(),
            });
        }
        let mut out = mags.mapv(|v| (v + LOG_FLOOR).ln());
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Everything the trainer needs from one noisy/clean utterance pair.
#[derive(Debug, Clone)]
pub struct UtteranceData {
    /// Standardized log magnitudes, frames x bins.
    pub features: Array2<f64>,
    pub clean_env: EnvelopeMatrix,
    pub noisy_env: EnvelopeMatrix,
}

impl UtteranceData {
    pub fn frames(&self) -> usize {
        self.features.nrows()
    }
}

/// Analysis of a clean/noisy pair into magnitudes and band envelopes.
pub struct PairAnalysis {
    pub noisy_mags: Array2<f64>,
    pub clean_env: EnvelopeMatrix,
    pub noisy_env: EnvelopeMatrix,
}

pub fn analyze_pair(clean: &Waveform, noisy: &Waveform, cfg: &StftConfig, layout: &BandLayout) -> Result<PairAnalysis> {
    let cs = stft_analyze(clean, cfg)?;
    let ns = stft_analyze(noisy, cfg)?;
    Ok(PairAnalysis {
        noisy_mags: ns.magnitudes(),
        clean_env: band_envelope(&cs, layout)?,
        noisy_env: band_envelope(&ns, layout)?,
    })
}

/// Every window of one band across a set of utterances. The network input
/// is the standardized spectrum of all bins over the window's frames.
pub struct ContextDataset<'a> {
    utterances: &'a [UtteranceData],
    band: usize,
    n: usize,
    bins: usize,
    index: Vec<(usize, usize)>,
}

impl<'a> ContextDataset<'a> {
    /// `band` is 1-based.
    pub fn new(utterances: &'a [UtteranceData], band: usize, n: usize) -> Result<Self> {
        let bins = utterances.first().map_or(0, |u| u.features.ncols());
        let mut index = Vec::new();
        for (u, utt) in utterances.iter().enumerate() {
            if utt.features.ncols() != bins {
                return Err(Error::invalid("utterances disagree in bin count"));
            }
            utt.clean_env.band_row(band)?;
            for m in n..=utt.frames() {
                index.push((u, m));
            }
        }
        Ok(Self {
            utterances,
            band,
            n,
            bins,
            index,
        })
    }
}

impl WindowDataset for ContextDataset<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn input_dim(&self) -> usize {
        self.bins * self.n
    }

    fn window_len(&self) -> usize {
        self.n
    }

    fn fill(&self, idx: usize, input: &mut [f64], clean: &mut [f64], noisy: &mut [f64]) {
        let (u, m) = self.index[idx];
        let utt = &self.utterances[u];
        let feats = utt.features.as_slice().expect("standard layout");
        input.copy_from_slice(&feats[(m - self.n) * self.bins..m * self.bins]);
        let j = self.band - 1;
        for (t, frame) in (m - self.n..m).enumerate() {
            clean[t] = utt.clean_env.values()[[j, frame]];
            noisy[t] = utt.noisy_env.values()[[j, frame]];
        }
    }
}

/// One network per band, all sharing the envelope length.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementSystem {
    pub cost: CostKind,
    pub n: usize,
    pub stft: StftConfig,
    pub layout: BandLayout,
    pub normalizer: FeatureNormalizer,
    pub networks: Vec<Mlp>,
}

/// Network outputs for every window of one utterance, per band: a
/// `(M - N + 1) x N` matrix whose row `i` covers frames `i..i+N` (0-based).
pub type WindowGains = Vec<Array2<f64>>;

/// Averages overlapping window estimates into one gain per frame.
pub fn average_window_gains(windows: &[Array2<f64>], frames: usize) -> Result<EnvelopeMatrix> {
    let mut out = Array2::zeros((windows.len(), frames));
    for (j, w) in windows.iter().enumerate() {
        let n = w.ncols();
        if w.nrows() + n - 1 != frames {
            return Err(Error::DimensionMismatch {
                expected: frames,
                got: w.nrows() + n - 1,
            });
        }
        let mut count = vec![0usize; frames];
        for (start, row) in w.rows().into_iter().enumerate() {
            for (t, g) in row.iter().enumerate() {
                out[[j, start + t]] += g;
                count[start + t] += 1;
            }
        }
        for (m, c) in count.into_iter().enumerate() {
            out[[j, m]] /= c as f64;
        }
    }
    EnvelopeMatrix::new(out)
}

/// Stacks every window of a standardized feature matrix into a batch.
fn context_batch(features: &Array2<f64>, n: usize) -> Result<Array2<f64>> {
    let (frames, bins) = features.dim();
    if frames < n {
        return Err(Error::InsufficientContext { end_frame: frames, len: n });
    }
    let flat = features.as_standard_layout();
    let flat = flat.as_slice().expect("standard layout");
    let windows = frames - n + 1;
    let mut out = Array2::zeros((windows, n * bins));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        row.as_slice_mut()
            .expect("row-major")
            .copy_from_slice(&flat[i * bins..(i + n) * bins]);
    }
    Ok(out)
}

impl EnhancementSystem {
    pub fn validate(&self) -> Result<()> {
        if self.networks.len() != self.layout.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.len(),
                got: self.networks.len(),
            });
        }
        let expected = MlpSpec::for_context(self.stft.bins(), self.n, vec![]);
        for net in &self.networks {
            if net.spec().input_dim != expected.input_dim || net.spec().output_dim != self.n {
                return Err(Error::invalid("network shape does not match the system"));
            }
        }
        Ok(())
    }

    /// Raw network outputs for every window of the noisy spectrogram.
    pub fn window_gains(&self, noisy: &Spectrogram) -> Result<WindowGains> {
        let feats = self.normalizer.transform(&noisy.magnitudes())?;
        let batch = context_batch(&feats, self.n)?;
        self.networks
            .iter()
            .map(|net| Ok(net.forward_batch(batch.view())?.output().clone()))
            .collect()
    }

    /// Per-band, per-frame gains (bands x frames), each the mean of all
    /// window estimates covering that frame.
    pub fn infer_gains(&self, noisy: &Spectrogram) -> Result<EnvelopeMatrix> {
        average_window_gains(&self.window_gains(noisy)?, noisy.frames())
    }

    /// Applies band gains uniformly across each band's bins and resynthesizes
    /// with the noisy phase.
    pub fn enhance_spectrogram(&self, noisy: &Spectrogram) -> Result<Spectrogram> {
        let gains = self.infer_gains(noisy)?;
        apply_gain_with_noisy_phase(noisy, &self.layout.broadcast_gains(&gains)?)
    }

    pub fn enhance(&self, noisy: &Waveform) -> Result<Waveform> {
        let spec = stft_analyze(noisy, &self.stft)?;
        stft_synthesize(&self.enhance_spectrogram(&spec)?)
    }
}

/// Shape and front end shared by every band network of a system.
#[derive(Debug, Clone)]
pub struct SystemSetup {
    pub hidden: Vec<usize>,
    pub n: usize,
    pub stft: StftConfig,
    pub layout: BandLayout,
    pub normalizer: FeatureNormalizer,
}

/// Trains all band networks of one system. Bands train in parallel; each
/// band's seed is derived from the config seed and the band index.
pub fn train_system(
    setup: &SystemSetup,
    train: &[UtteranceData],
    val: &[UtteranceData],
    cfg: &TrainConfig,
) -> Result<(EnhancementSystem, Vec<TrainLog>)> {
    let n = setup.n;
    let spec = MlpSpec::for_context(setup.stft.bins(), n, setup.hidden.clone());
    let trained: Vec<(Mlp, TrainLog)> = (1..=setup.layout.len())
        .into_par_iter()
        .map(|j| {
            let tr = ContextDataset::new(train, j, n)?;
            let va = ContextDataset::new(val, j, n)?;
            let band_cfg = TrainConfig {
                seed: seed::derive(cfg.seed, j as u64),
                ..cfg.clone()
            };
            let out = train_band(&spec, &tr, &va, &band_cfg)?;
            Ok((out.network, out.log))
        })
        .collect::<Result<_>>()?;
    let (networks, logs) = trained.into_iter().unzip();
    let system = EnhancementSystem {
        cost: cfg.cost,
        n,
        stft: setup.stft,
        layout: setup.layout.clone(),
        normalizer: setup.normalizer.clone(),
        networks,
    };
    system.validate()?;
    Ok((system, logs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_windows_average_to_the_constant() {
        let w = vec![Array2::from_elem((5, 4), 0.3); 2];
        let g = average_window_gains(&w, 8).unwrap();
        assert!(g.values().iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn single_window_passes_through() {
        let w = vec![Array2::from_shape_vec((1, 3), vec![0.1, 0.2, 0.3]).unwrap()];
        let g = average_window_gains(&w, 3).unwrap();
        assert_eq!(g.values().row(0).to_vec(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn two_windows_average_interior_frames() {
        let w = vec![Array2::from_shape_vec((2, 3), vec![0.1, 0.2, 0.3, 0.5, 0.6, 0.7]).unwrap()];
        let g = average_window_gains(&w, 4).unwrap();
        let got = g.values().row(0).to_vec();
        let expected = [0.1, (0.2 + 0.5) / 2.0, (0.3 + 0.6) / 2.0, 0.7];
        assert!(got.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn context_batch_rows_are_consecutive_frames() {
        let f = Array2::from_shape_fn((5, 2), |(m, k)| (10 * m + k) as f64);
        let b = context_batch(&f, 3).unwrap();
        assert_eq!(b.dim(), (3, 6));
        assert_eq!(b.row(1).to_vec(), vec![10.0, 11.0, 20.0, 21.0, 30.0, 31.0]);
        assert!(context_batch(&f, 6).is_err());
    }

    #[test]
    fn normalizer_standardizes_training_frames() {
        let m = Array2::from_shape_fn((50, 3), |(i, k)| 0.1 + (i * (k + 1)) as f64 / 10.0);
        let n = FeatureNormalizer::fit([&m]).unwrap();
        let t = n.transform(&m).unwrap();
        for col in t.columns() {
            let v = col.to_vec();
            assert!(crate::stats::mean(&v).abs() < 1e-10);
        }
    }

    #[test]
    fn dataset_windows_line_up_with_envelopes() {
        let frames = 6;
        let utt = UtteranceData {
            features: Array2::from_shape_fn((frames, 2), |(m, k)| (m * 2 + k) as f64),
            clean_env: EnvelopeMatrix::new(Array2::from_shape_fn((2, frames), |(j, m)| (j * 100 + m) as f64)).unwrap(),
            noisy_env: EnvelopeMatrix::new(Array2::from_shape_fn((2, frames), |(j, m)| (j * 100 + m + 50) as f64))
                .unwrap(),
        };
        let utts = [utt];
        let d = ContextDataset::new(&utts, 2, 3).unwrap();
        assert_eq!(d.len(), 4);
        let (mut x, mut a, mut r) = (vec![0.0; 6], vec![0.0; 3], vec![0.0; 3]);
        d.fill(1, &mut x, &mut a, &mut r);
        assert_eq!(x, vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(a, vec![101.0, 102.0, 103.0]);
        assert_eq!(r, vec![151.0, 152.0, 153.0]);
    }
}
