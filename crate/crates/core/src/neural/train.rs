use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpSpec};
use crate::costs::{chain_through_gain, descent_cost_grad, CostKind};
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

/// Line written at the top of every training log.
pub const LOG_NOTE: &str = "# no batch normalization; inputs are per-bin standardized log magnitudes";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub cost: CostKind,
    /// Step size per example: a minibatch update is `lr` times the summed gradients.
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_floor: f64,
    pub max_epochs: usize,
    pub minibatch: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for the given cost: step 0.01 for ELC, 5e-5 for MSE.
    pub fn for_cost(cost: CostKind) -> Self {
        Self {
            cost,
            learning_rate: match cost {
                CostKind::Elc => 0.01,
                CostKind::Mse => 5e-5,
            },
            lr_decay: 0.7,
            lr_floor: 1e-10,
            max_epochs: 200,
            minibatch: 256,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::invalid("lr_decay must lie in (0, 1)"));
        }
        if self.minibatch == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("minibatch and max_epochs must be positive"));
        }
        Ok(())
    }
}

/// Examples of (network input, clean envelope window, noisy envelope window).
pub trait WindowDataset: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn input_dim(&self) -> usize;

    fn window_len(&self) -> usize;

    /// Writes example `idx` into the three buffers.
    fn fill(&self, idx: usize, input: &mut [f64], clean: &mut [f64], noisy: &mut [f64]);
}

/// Fully materialized dataset, one example per row.
#[derive(Debug, Clone)]
pub struct DenseDataset {
    pub inputs: Array2<f64>,
    pub clean: Array2<f64>,
    pub noisy: Array2<f64>,
}

impl DenseDataset {
    pub fn new(inputs: Array2<f64>, clean: Array2<f64>, noisy: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != clean.nrows() || clean.dim() != noisy.dim() {
            return Err(Error::invalid("dataset arrays disagree in shape"));
        }
        Ok(Self { inputs, clean, noisy })
    }
}

impl WindowDataset for DenseDataset {
    fn len(&self) -> usize {
        self.inputs.nrows()
    }

    fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    fn window_len(&self) -> usize {
        self.clean.ncols()
    }

    fn fill(&self, idx: usize, input: &mut [f64], clean: &mut [f64], noisy: &mut [f64]) {
        input.iter_mut().zip(self.inputs.row(idx)).for_each(|(d, s)| *d = *s);
        clean.iter_mut().zip(self.clean.row(idx)).for_each(|(d, s)| *d = *s);
        noisy.iter_mut().zip(self.noisy.row(idx)).for_each(|(d, s)| *d = *s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example cost seen during the epoch (NaN for epoch 0).
    pub train_cost: f64,
    pub val_cost: f64,
    /// Step size used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Examples whose cost was undefined (constant windows), summed over epochs.
    pub skipped: usize,
}

impl TrainLog {
    /// CSV with columns `epoch,train_cost,val_cost,lr` after a note line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{LOG_NOTE}")?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "train_cost", "val_cost", "lr"])?;
        for r in &self.records {
            out.write_record([
                r.epoch.to_string(),
                format!("{:e}", r.train_cost),
                format!("{:e}", r.val_cost),
                format!("{:e}", r.lr),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let records = rdr.deserialize().collect::<std::result::Result<Vec<EpochRecord>, _>>()?;
        Ok(Self { records, skipped: 0 })
    }
}

struct Batch {
    inputs: Array2<f64>,
    clean: Array2<f64>,
    noisy: Array2<f64>,
}

impl Batch {
    fn load<D: WindowDataset>(data: &D, idx: &[usize]) -> Self {
        let (d, n) = (data.input_dim(), data.window_len());
        let mut b = Batch {
            inputs: Array2::zeros((idx.len(), d)),
            clean: Array2::zeros((idx.len(), n)),
            noisy: Array2::zeros((idx.len(), n)),
        };
        for (row, &i) in idx.iter().enumerate() {
            data.fill(
                i,
                b.inputs.row_mut(row).as_slice_mut().expect("row-major"),
                b.clean.row_mut(row).as_slice_mut().expect("row-major"),
                b.noisy.row_mut(row).as_slice_mut().expect("row-major"),
            );
        }
        b
    }
}

/// Per-example costs and gain gradients for one batch of network outputs.
/// Undefined costs come back as `None` with a zero gradient row.
fn batch_costs(kind: CostKind, b: &Batch, gains: &Array2<f64>) -> Result<(Vec<Option<f64>>, Array2<f64>)> {
    let mut upstream = Array2::zeros(gains.dim());
    let mut costs = Vec::with_capacity(gains.nrows());
    for row in 0..gains.nrows() {
        let r = b.noisy.row(row);
        let r = r.as_slice().expect("row-major");
        let est: Vec<f64> = gains.row(row).iter().zip(r).map(|(g, x)| g * x).collect();
        match descent_cost_grad(kind, b.clean.row(row).as_slice().expect("row-major"), &est) {
            Ok(e) => {
                let g = chain_through_gain(r, &e.gradient)?;
                upstream.row_mut(row).iter_mut().zip(g).for_each(|(d, s)| *d = s);
                costs.push(Some(e.value));
            }
            Err(Error::UndefinedCorrelation | Error::OrthogonalDegenerate) => costs.push(None),
            Err(e) => return Err(e),
        }
    }
    Ok((costs, upstream))
}

const EVAL_BATCH: usize = 1024;

/// Mean per-example cost (minimization convention) over a dataset.
pub fn evaluate<D: WindowDataset>(net: &Mlp, data: &D, kind: CostKind) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut all = Vec::with_capacity(data.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        let b = Batch::load(data, chunk);
        let cache = net.forward_batch(b.inputs.view())?;
        let (costs, _) = batch_costs(kind, &b, cache.output())?;
        all.extend(costs.into_iter().flatten());
    }
    if all.is_empty() {
        return Err(Error::invalid("no example with a defined cost"));
    }
    Ok(stats::mean(&all))
}

#[derive(Debug, Clone)]
pub struct TrainedBand {
    pub network: Mlp,
    pub log: TrainLog,
}

fn check_dataset<D: WindowDataset>(spec: &MlpSpec, d: &D, what: &str) -> Result<()> {
    if d.is_empty() {
        return Err(Error::invalid(format!("{what} set is empty")));
    }
    if d.input_dim() != spec.input_dim || d.window_len() != spec.output_dim {
        return Err(Error::invalid(format!("{what} set does not match the network shape")));
    }
    Ok(())
}

/// Minibatch SGD with a validation-driven step schedule: after each epoch
/// the step shrinks by `lr_decay` if the validation cost went up; training
/// stops at `max_epochs` or once the step falls below `lr_floor`. Returns the
/// final-epoch weights.
pub fn train_band<D: WindowDataset>(spec: &MlpSpec, train: &D, val: &D, cfg: &TrainConfig) -> Result<TrainedBand> {
    cfg.validate()?;
    check_dataset(spec, train, "training")?;
    check_dataset(spec, val, "validation")?;
    let mut net = Mlp::new(spec.clone(), seed::derive_str(cfg.seed, "init"))?;
    let mut lr = cfg.learning_rate;
    let mut prev_val = evaluate(&net, val, cfg.cost)?;
    let mut log = TrainLog::default();
    log.records.push(EpochRecord {
        epoch: 0,
        train_cost: f64::NAN,
        val_cost: prev_val,
        lr,
    });
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut rng = seed::rng(seed::derive(seed::derive_str(cfg.seed, "shuffle"), epoch as u64));
        order.shuffle(&mut rng);
        let mut seen = Vec::with_capacity(train.len());
        for chunk in order.chunks(cfg.minibatch) {
            let b = Batch::load(train, chunk);
            let cache = net.forward_batch(b.inputs.view())?;
            let (costs, upstream) = batch_costs(cfg.cost, &b, cache.output())?;
            log.skipped += costs.iter().filter(|c| c.is_none()).count();
            seen.extend(costs.into_iter().flatten());
            let grads = net.backward_batch(&cache, upstream.view())?;
            net.sgd_step(&grads, lr);
        }
        let val_cost = evaluate(&net, val, cfg.cost)?;
        if !val_cost.is_finite() {
            return Err(Error::invalid(format!("validation cost diverged at epoch {epoch}")));
        }
        log.records.push(EpochRecord {
            epoch,
            train_cost: stats::mean(&seen),
            val_cost,
            lr,
        });
        log::debug!("epoch {epoch}: train {:.6} val {val_cost:.6} lr {lr:e}", stats::mean(&seen));
        if val_cost > prev_val {
            lr *= cfg.lr_decay;
        }
        prev_val = val_cost;
        if lr < cfg.lr_floor {
            break;
        }
    }
    Ok(TrainedBand { network: net, log })
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    /// Noisy envelopes are clean ones plus a known offset; the input holds
    /// both the noisy window and the offset, so the ideal gain is linear-ish.
    fn toy(examples: usize, n: usize, s: u64) -> DenseDataset {
        let mut rng = seed::rng(s);
        let mut inputs = Array2::zeros((examples, 2 * n));
        let mut clean = Array2::zeros((examples, n));
        let mut noisy = Array2::zeros((examples, n));
        for e in 0..examples {
            for k in 0..n {
                let a: f64 = rng.random_range(0.2..1.0);
                let v: f64 = rng.random_range(0.0..1.0);
                clean[[e, k]] = a;
                noisy[[e, k]] = a + v;
                inputs[[e, k]] = a + v;
                inputs[[e, n + k]] = v;
            }
        }
        DenseDataset::new(inputs, clean, noisy).unwrap()
    }

    fn spec(n: usize) -> MlpSpec {
        MlpSpec {
            input_dim: 2 * n,
            hidden: vec![16],
            output_dim: n,
        }
    }

    #[test]
    fn mse_training_halves_validation_cost() {
        let (train, val) = (toy(2000, 4, 1), toy(400, 4, 2));
        let cfg = TrainConfig {
            learning_rate: 0.01,
            max_epochs: 30,
            minibatch: 32,
            ..TrainConfig::for_cost(CostKind::Mse)
        };
        let out = train_band(&spec(4), &train, &val, &cfg).unwrap();
        let first = out.log.records[0].val_cost;
        let last = out.log.records.last().unwrap().val_cost;
        assert!(last <= 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn elc_training_raises_validation_correlation() {
        let (train, val) = (toy(2000, 4, 3), toy(400, 4, 4));
        let cfg = TrainConfig {
            max_epochs: 30,
            minibatch: 32,
            ..TrainConfig::for_cost(CostKind::Elc)
        };
        let out = train_band(&spec(4), &train, &val, &cfg).unwrap();
        let first = -out.log.records[0].val_cost;
        let last = -out.log.records.last().unwrap().val_cost;
        assert!(last > first, "{first} -> {last}");
    }

    #[test]
    fn step_schedule_only_shrinks_by_the_decay_factor() {
        let (train, val) = (toy(300, 3, 5), toy(100, 3, 6));
        let cfg = TrainConfig {
            learning_rate: 0.5,
            max_epochs: 25,
            minibatch: 16,
            ..TrainConfig::for_cost(CostKind::Mse)
        };
        let out = train_band(&spec(3), &train, &val, &cfg).unwrap();
        for w in out.log.records.windows(2) {
            let ratio = w[1].lr / w[0].lr;
            assert!(ratio == 1.0 || (ratio - 0.7).abs() < 1e-12, "{ratio}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (train, val) = (toy(200, 3, 7), toy(50, 3, 8));
        let cfg = TrainConfig {
            max_epochs: 3,
            minibatch: 16,
            ..TrainConfig::for_cost(CostKind::Elc)
        };
        let a = train_band(&spec(3), &train, &val, &cfg).unwrap();
        let b = train_band(&spec(3), &train, &val, &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.log.records.len(), b.log.records.len());
    }

    #[test]
    fn tiny_step_descends_on_a_single_example() {
        let data = toy(1, 4, 9);
        let net = Mlp::new(spec(4), 3).unwrap();
        for kind in CostKind::BOTH {
            let before = evaluate(&net, &data, kind).unwrap();
            let b = Batch::load(&data, &[0]);
            let cache = net.forward_batch(b.inputs.view()).unwrap();
            let (_, up) = batch_costs(kind, &b, cache.output()).unwrap();
            let mut stepped = net.clone();
            stepped.sgd_step(&net.backward_batch(&cache, up.view()).unwrap(), 1e-6);
            assert!(evaluate(&stepped, &data, kind).unwrap() < before, "{kind}");
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let empty = DenseDataset::new(Array2::zeros((0, 6)), Array2::zeros((0, 3)), Array2::zeros((0, 3))).unwrap();
        let cfg = TrainConfig::for_cost(CostKind::Mse);
        assert!(train_band(&spec(3), &empty, &toy(10, 3, 1), &cfg).is_err());
    }

    #[test]
    fn log_csv_round_trip() {
        let log = TrainLog {
            records: vec![
                EpochRecord { epoch: 0, train_cost: f64::NAN, val_cost: 0.5, lr: 0.01 },
                EpochRecord { epoch: 1, train_cost: 0.4, val_cost: 0.3, lr: 0.01 },
            ],
            skipped: 0,
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(LOG_NOTE));
        let back = TrainLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.records.len(), 2);
        assert_eq!(back.records[1], log.records[1]);
    }
}
