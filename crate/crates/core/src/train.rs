//! Minibatch training with Adam on cross-entropy.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::dataset::{Dataset, Sample};
use crate::model::{argmax_label, MixedGrads, MixedModel, ModelConfig, Phase};
use crate::nn::{adam_step, AdamConfig, AdamState, NnError, LOG_CLAMP};
use crate::{par, seed};

/// Samples per parallel work unit. Fixed so the floating-point summation
/// order, and therefore every result, is independent of the thread count.
const CHUNK: usize = 8;

const HOLDOUT_STREAM: u64 = 0x686f6c64;
const SHUFFLE_STREAM: u64 = 0x73687566;
const DROPOUT_STREAM: u64 = 0x64726f70;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub holdout_fraction: f64,
    pub sensor_branch: bool,
    pub dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            shuffle: true,
            holdout_fraction: 0.1,
            sensor_branch: true,
            dropout: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a finite non-negative number");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..=0.5).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 0.5]");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss or gradient at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("model expects {expected} input, dataset is {found}")]
    ModeMismatch { expected: crate::sim::InputMode, found: crate::sim::InputMode },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    /// Global optimizer step, counted from 1.
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldoutRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    pub steps: Vec<StepRecord>,
    pub holdout: Vec<HoldoutRecord>,
}

impl LossCurve {
    pub fn initial_loss(&self) -> Option<f64> {
        self.steps.first().map(|r| r.loss)
    }

    /// Mean training loss over the last epoch.
    pub fn final_loss(&self) -> Option<f64> {
        let last = self.steps.last()?.epoch;
        let tail: Vec<f64> = self.steps.iter().filter(|r| r.epoch == last).map(|r| r.loss).collect();
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }

    pub fn final_holdout(&self) -> Option<HoldoutRecord> {
        self.holdout.last().copied()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("epoch,step,loss,accuracy\n");
        for r in &self.steps {
            writeln!(out, "{},{},{:.6},{:.6}", r.epoch, r.step, r.loss, r.accuracy).unwrap();
        }
        out
    }

    pub fn holdout_text(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy\n");
        for r in &self.holdout {
            writeln!(out, "{},{:.6},{:.6}", r.epoch, r.loss, r.accuracy).unwrap();
        }
        out
    }
}

/// Seeded split into (train, holdout) sample indices. At least one sample
/// always stays in the training part.
pub fn holdout_split(len: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut seed::stream(seed, &[HOLDOUT_STREAM]));
    let n_hold = ((len as f64 * fraction).floor() as usize).min(len.saturating_sub(1));
    let holdout = idx.split_off(len - n_hold);
    (idx, holdout)
}

/// Builds the standard model for the dataset mode and trains it.
pub fn train(ds: &Dataset, config: &TrainConfig) -> Result<(MixedModel<f32>, LossCurve), TrainError> {
    let model = MixedModel::build(&ModelConfig {
        mode: ds.mode,
        seed: config.seed,
        dropout: config.dropout,
        sensor_branch: config.sensor_branch,
    });
    train_model(model, ds, config)
}

/// Trains an existing model in place of a freshly built one.
pub fn train_model(
    mut model: MixedModel<f32>,
    ds: &Dataset,
    config: &TrainConfig,
) -> Result<(MixedModel<f32>, LossCurve), TrainError> {
    config.validate()?;
    if ds.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if ds.mode != model.mode {
        return Err(TrainError::ModeMismatch { expected: model.mode, found: ds.mode });
    }
    let (mut order, holdout) = holdout_split(ds.len(), config.holdout_fraction, config.seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), &model.param_sizes());
    let mut curve = LossCurve::default();
    let mut step = 0;

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut seed::stream(config.seed, &[SHUFFLE_STREAM, epoch as u64]));
        }
        for batch in order.chunks(config.batch_size) {
            step += 1;
            let (grads, loss, correct) =
                batch_gradient(&model, &ds.samples, batch, [config.seed, epoch as u64, step as u64])?;
            let loss = loss / batch.len() as f64;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(TrainError::NonFinite { epoch, step });
            }
            adam_step(&mut model.params(&grads), &mut adam)
                .map_err(|_| TrainError::NonFinite { epoch, step })?;
            curve.steps.push(StepRecord { epoch, step, loss, accuracy: correct as f64 / batch.len() as f64 });
        }
        if !holdout.is_empty() {
            let (loss, accuracy) = score(&model, &ds.samples, &holdout)?;
            curve.holdout.push(HoldoutRecord { epoch, loss, accuracy });
        }
    }
    Ok((model, curve))
}

fn batch_gradient(
    model: &MixedModel<f32>,
    samples: &[Sample],
    batch: &[usize],
    key: [u64; 3],
) -> Result<(MixedGrads<f32>, f64, usize), TrainError> {
    let scale = 1.0 / batch.len() as f32;
    let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
    let parts = par::map_slice(&chunks, |c, chunk| {
        let mut grads = model.zero_grads();
        let mut loss = 0.0;
        let mut correct = 0;
        for (j, &i) in chunk.iter().enumerate() {
            let mut rng = seed::stream(key[0], &[DROPOUT_STREAM, key[1], key[2], (c * CHUNK + j) as u64]);
            let (l, probs) = model.accumulate_sample(&samples[i], scale, Phase::Train, &mut rng, &mut grads)?;
            loss += l;
            correct += usize::from(argmax_label(&probs) == samples[i].label);
        }
        Ok::<_, NnError>((grads, loss, correct))
    });
    let mut total = model.zero_grads();
    let (mut loss, mut correct) = (0.0, 0);
    for part in parts {
        let (g, l, c) = part?;
        total.add_assign(&g);
        loss += l;
        correct += c;
    }
    Ok((total, loss, correct))
}

/// Inference-mode mean cross-entropy and accuracy over `indices`.
pub fn score(model: &MixedModel<f32>, samples: &[Sample], indices: &[usize]) -> Result<(f64, f64), TrainError> {
    let parts = par::map_slice(indices, |_, &i| {
        let s = &samples[i];
        let probs = model.probabilities(&s.observation, &s.sensors)?;
        let loss = -f64::from(probs[s.label as usize]).max(LOG_CLAMP).ln();
        Ok::<_, NnError>((loss, argmax_label(&probs) == s.label))
    });
    let (mut loss, mut correct) = (0.0, 0usize);
    for p in parts {
        let (l, c) = p?;
        loss += l;
        correct += usize::from(c);
    }
    let n = indices.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}
