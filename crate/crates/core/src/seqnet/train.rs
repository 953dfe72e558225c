use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{forward_logits, Dropout, Params};
use super::tape::{weighted_bce, Tape};
use super::{ModelConfig, SequenceModel, TrainingMeta};
use crate::error::{Error, Result};
use crate::features::PairSample;
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Optimizer::Sgd),
            "adam" => Some(Optimizer::adam()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// `(w0, w1)` loss weights of the negative and positive class.
    pub class_weights: (f64, f64),
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Global gradient-norm clip, applied to recurrent models only.
    pub clip_norm: Option<f64>,
}

impl TrainConfig {
    pub fn new(batch_size: usize, seed: u64) -> Self {
        Self {
            learning_rate: 0.001,
            max_epochs: 1000,
            batch_size,
            patience: 50,
            class_weights: (1.0, 1.0),
            optimizer: Optimizer::adam(),
            seed,
            clip_norm: Some(5.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid_config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid_config("batch_size must be at least 1"));
        }
        let (w0, w1) = self.class_weights;
        if !(w0 >= 0.0 && w1 >= 0.0 && w0.is_finite() && w1.is_finite()) {
            return Err(Error::invalid_config("class weights must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 when no epoch ran).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_accuracy,elapsed_s\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6}",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy, e.elapsed_s
            );
        }
        s
    }
}

/// Mean weighted loss of a batch of already scaled samples.
pub fn batch_loss(
    cfg: &ModelConfig,
    params: &Params,
    inputs: &[&Matrix],
    labels: &[u8],
    weights: (f64, f64),
) -> Result<f64> {
    let mut tape = Tape::new();
    let z = forward_logits(&mut tape, cfg, params, inputs, &mut Dropout::off(), false)?;
    let loss = tape.weighted_bce(z, labels, weights);
    Ok(tape.value(loss).get(0, 0))
}

fn gradients_with(
    cfg: &ModelConfig,
    params: &Params,
    inputs: &[&Matrix],
    labels: &[u8],
    weights: (f64, f64),
    dropout: &mut Dropout<'_>,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let z = forward_logits(&mut tape, cfg, params, inputs, dropout, false)?;
    let loss = tape.weighted_bce(z, labels, weights);
    let value = tape.value(loss).get(0, 0);
    let grads = tape.backward(loss);
    if let Some((name, _)) = params
        .names()
        .iter()
        .zip(&grads)
        .find(|(_, g)| !g.all_finite())
    {
        return Err(Error::NumericalFailure {
            layer: format!("gradient of {name}"),
        });
    }
    Ok((value, grads))
}

/// Mean weighted loss and its exact gradient with respect to every
/// parameter, in parameter order. Dropout is disabled.
pub fn batch_gradients(
    cfg: &ModelConfig,
    params: &Params,
    inputs: &[&Matrix],
    labels: &[u8],
    weights: (f64, f64),
) -> Result<(f64, Vec<Matrix>)> {
    gradients_with(cfg, params, inputs, labels, weights, &mut Dropout::off())
}

/// Weighted loss and accuracy (threshold 0.5) of `model` on scaled samples.
pub fn evaluate(model: &SequenceModel, samples: &[PairSample], weights: (f64, f64)) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let feats: Vec<Matrix> = samples.iter().map(|s| s.features.clone()).collect();
    let probs = model.forward_batch(&feats, true)?;
    let n = samples.len() as f64;
    let loss = probs
        .iter()
        .zip(samples)
        .map(|(&p, s)| weighted_bce(p, s.label, weights))
        .sum::<f64>()
        / n;
    let correct = probs
        .iter()
        .zip(samples)
        .filter(|(&p, s)| u8::from(p >= 0.5) == s.label)
        .count();
    Ok((loss, correct as f64 / n))
}

struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

fn clip(grads: &mut [Matrix], max_norm: f64) {
    let norm = grads.iter().map(Matrix::sum_squares).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_assign(k));
    }
}

fn step(params: &mut Params, grads: &[Matrix], cfg: &TrainConfig, state: &mut AdamState) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.values_mut().iter_mut().zip(grads) {
                for (x, d) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *x -= lr * d;
                }
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            state.t += 1;
            let c1 = 1.0 - beta1.powi(state.t);
            let c2 = 1.0 - beta2.powi(state.t);
            for (i, (p, g)) in params.values_mut().iter_mut().zip(grads).enumerate() {
                let (m, v) = (state.m[i].as_mut_slice(), state.v[i].as_mut_slice());
                for (j, (x, &d)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
                    m[j] = beta1 * m[j] + (1.0 - beta1) * d;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * d * d;
                    *x -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Minibatch training with per-epoch shuffling and early stopping on the
/// validation loss. Samples are raw features; the model's scaler (fitted on
/// the training split beforehand) is applied here. The returned model holds
/// the parameters of the best validation epoch.
pub fn train(
    model: &SequenceModel,
    train_set: &[PairSample],
    val_set: &[PairSample],
    cfg: &TrainConfig,
) -> Result<(SequenceModel, TrainingHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid_input("training and validation sets must be non-empty"));
    }
    let start = Instant::now();
    let scale = |s: &[PairSample]| -> Vec<PairSample> { s.iter().map(|x| model.scaler.apply_sample(x)).collect() };
    let (train_scaled, val_scaled) = (scale(train_set), scale(val_set));
    let mut current = model.clone();
    let mut history = TrainingHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let zeros = || current.params.values().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect::<Vec<_>>();
    let mut adam = AdamState {
        m: zeros(),
        v: zeros(),
        t: 0,
    };
    let (initial_loss, _) = evaluate(&current, &val_scaled, cfg.class_weights)?;
    let mut best_loss = initial_loss;
    let mut best_params = current.params.clone();
    let mut wait = 0usize;
    let mut order: Vec<usize> = (0..train_scaled.len()).collect();
    let clip_norm = cfg.clip_norm.filter(|_| current.config.arch.is_recurrent());

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<&Matrix> = chunk.iter().map(|&i| &train_scaled[i].features).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train_scaled[i].label).collect();
            let mut dropout = Dropout {
                rate: current.config.dropout,
                rng: Some(&mut drop_rng),
            };
            let (loss, mut grads) = gradients_with(
                &current.config,
                &current.params,
                &inputs,
                &labels,
                cfg.class_weights,
                &mut dropout,
            )?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            if let Some(c) = clip_norm {
                clip(&mut grads, c);
            }
            step(&mut current.params, &grads, cfg, &mut adam);
            total += loss * chunk.len() as f64;
        }
        let (val_loss, val_accuracy) = evaluate(&current, &val_scaled, cfg.class_weights).map_err(|e| {
            if e.is_numeric() {
                Error::TrainingDiverged { epoch }
            } else {
                e
            }
        })?;
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / train_scaled.len() as f64,
            val_loss,
            val_accuracy,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: train {:.5} val {val_loss:.5} acc {val_accuracy:.3}", total / train_scaled.len() as f64);
        if val_loss < best_loss {
            best_loss = val_loss;
            best_params = current.params.clone();
            history.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait > cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    current.params = best_params;
    current.meta = TrainingMeta {
        epochs_run: history.epochs.len(),
        best_val_loss: best_loss,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((current, history))
}
