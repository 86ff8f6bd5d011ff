//! Single-split training: minibatch Adam with on-the-fly mixing, validation
//! after every epoch and patience-based early stopping.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use crate::augment::{apply_policy_with_mode, Batch};
use crate::dataset::{LabelVector, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::LogMel;
use crate::nn::{features_to_tensor, mean_bce, AdamState, Dropout, Mode, ModelConfig, ModelParams, TrainState};
use crate::seed::{self, Stream};

/// Rows scored per forward pass at inference time.
const EVAL_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Waiting,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower
/// validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub stale_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best_loss: f64::INFINITY, best_epoch: 0, stale_epochs: 0 }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Progress {
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.stale_epochs = 0;
            return Progress::Improved;
        }
        self.stale_epochs += 1;
        if self.stale_epochs >= self.patience {
            Progress::Stop
        } else {
            Progress::Waiting
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Per-label accuracy at 0.5 against the unmixed labels of each batch.
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

impl TrainingHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Shortest round-trip float formatting, so parsing gives the same values.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{HISTORY_HEADER}\n");
        for e in &self.epochs {
            writeln!(out, "{},{},{},{},{}", e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc).unwrap();
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        if header.iter().collect::<Vec<_>>().join(",") != HISTORY_HEADER {
            return Err(Error::Parse { line: 1, msg: format!("expected header `{HISTORY_HEADER}`") });
        }
        let mut epochs = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            let num = |k: usize| -> Result<f64> {
                rec[k].parse().map_err(|_| Error::Parse { line, msg: format!("bad number `{}`", &rec[k]) })
            };
            let epoch = rec[0].parse().map_err(|_| Error::Parse { line, msg: format!("bad epoch `{}`", &rec[0]) })?;
            epochs.push(EpochRecord {
                epoch,
                train_loss: num(1)?,
                train_acc: num(2)?,
                val_loss: num(3)?,
                val_acc: num(4)?,
            });
        }
        Ok(TrainingHistory { epochs })
    }
}

/// Result of training on one split.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub optimizer: AdamState,
    pub history: TrainingHistory,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Counts label decisions at 0.5 that agree with the hard labels.
pub fn label_hits(probs: &[[f64; NUM_CLASSES]], labels: &[LabelVector]) -> usize {
    probs
        .iter()
        .zip(labels)
        .map(|(p, y)| p.iter().zip(&y.0).filter(|(p, y)| (**p >= 0.5) == (**y >= 0.5)).count())
        .sum()
}

/// Eval-mode probabilities, computed in chunks.
pub fn predict_all(params: &ModelParams, features: &[LogMel]) -> Result<Vec<[f64; NUM_CLASSES]>> {
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(EVAL_CHUNK) {
        out.extend(params.predict(chunk)?);
    }
    Ok(out)
}

/// Mean BCE and per-label accuracy of eval-mode predictions.
pub fn evaluate(params: &ModelParams, set: &Batch) -> Result<(f64, f64)> {
    let probs = predict_all(params, &set.features)?;
    let targets: Vec<[f64; NUM_CLASSES]> = set.labels.iter().map(|l| l.0).collect();
    let loss = mean_bce(&probs, &targets)?;
    let acc = label_hits(&probs, &set.labels) as f64 / (set.len() * NUM_CLASSES) as f64;
    Ok((loss, acc))
}

pub fn model_config(cfg: &TrainConfig, freq_bins: usize) -> ModelConfig {
    let mut mc = match cfg.blocks {
        Some(b) => ModelConfig::with_blocks(freq_bins, b),
        None => ModelConfig::for_input(freq_bins),
    };
    mc.dropout = cfg.dropout;
    mc
}

/// Trains one model. `stream_index` separates the random streams of
/// different folds under the same master seed.
pub fn train_model(cfg: &TrainConfig, stream_index: u64, train: &Batch, val: &Batch) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training set is empty"));
    }
    if val.is_empty() {
        return Err(Error::EmptyInput("validation set is empty"));
    }
    let bins = train.features[0].bins;
    let params = ModelParams::init(model_config(cfg, bins), seed::derive(cfg.seed, Stream::Init, stream_index));
    let mut state = TrainState::new(params, cfg.adam(), seed::derive(cfg.seed, Stream::Dropout, stream_index));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, Stream::Shuffle, stream_index));
    let mut mix_rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, Stream::Mixing, stream_index));

    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = (state.params.clone(), state.adam.clone());
    let mut history = TrainingHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut hits = 0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = Batch {
                features: idx.iter().map(|&i| train.features[i].clone()).collect(),
                labels: idx.iter().map(|&i| train.labels[i]).collect(),
            };
            let mixed = apply_policy_with_mode(&batch, cfg.policy, cfg.lambda_mode, &mut mix_rng)?;
            let x = features_to_tensor(&mixed.features)?;
            let targets: Vec<[f64; NUM_CLASSES]> = mixed.labels.iter().map(|l| l.0).collect();
            let cache = state.params.forward(&x, Mode::Train(Dropout::Sample(&mut state.dropout_rng)))?;
            let (loss, grads) = state.params.backward(&cache, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            state.apply(&grads)?;
            state.params.update_running_stats(&cache);
            loss_sum += loss * idx.len() as f64;
            hits += label_hits(&cache.probs, &batch.labels);
        }
        let (val_loss, val_acc) = evaluate(&state.params, val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: hits as f64 / (train.len() * NUM_CLASSES) as f64,
            val_loss,
            val_acc,
        });
        match stopper.observe(epoch, val_loss) {
            Progress::Improved => best = (state.params.clone(), state.adam.clone()),
            Progress::Waiting => {}
            Progress::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let (params, optimizer) = best;
    Ok(TrainedModel { params, optimizer, history, best_epoch: stopper.best_epoch, stopped_early })
}
