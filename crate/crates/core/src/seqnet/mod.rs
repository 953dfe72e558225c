//! Pair classifiers trained from scratch: Elman RNN, LSTM and a pre-norm
//! Transformer encoder, all over `L x 6` feature sequences.
//!
//! Gradients come from the reverse-mode [`tape`]; training is single
//! threaded and deterministic for fixed seeds.

mod arch;
mod checkpoint;
pub mod tape;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize_pair, DtwEngine, DtwMode, ScalerState, FEATURE_COUNT};
use crate::linalg::Matrix;
use crate::model::TrajectoryPoint;
use tape::{sigmoid_prob, Tape};

pub use arch::{init_params, position_encoding, Params};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use train::{
    batch_gradients, batch_loss, evaluate, train, EpochRecord, Optimizer, TrainConfig,
    TrainingHistory,
};

pub const DEFAULT_THRESHOLD: f64 = 0.9;
const INFERENCE_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arch {
    Rnn,
    Lstm,
    Transformer,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Rnn, Arch::Lstm, Arch::Transformer];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Rnn => "rnn",
            Arch::Lstm => "lstm",
            Arch::Transformer => "transformer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Some(Arch::Rnn),
            "lstm" => Some(Arch::Lstm),
            "transformer" => Some(Arch::Transformer),
            _ => None,
        }
    }

    pub fn is_recurrent(self) -> bool {
        self != Arch::Transformer
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub input_dim: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    /// Transformer only.
    pub heads: usize,
    /// Transformer only: feed-forward width as a multiple of `hidden_size`.
    pub ff_multiplier: usize,
    pub dropout: f64,
    pub seed: u64,
    /// Transformer only: add sinusoidal position encodings to the input.
    pub position_encoding: bool,
}

impl ModelConfig {
    pub fn new(arch: Arch, hidden_size: usize, seed: u64) -> Self {
        Self {
            arch,
            input_dim: FEATURE_COUNT,
            hidden_size,
            num_layers: 1,
            heads: 4,
            ff_multiplier: 4,
            dropout: 0.0,
            seed,
            position_encoding: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return Err(Error::invalid_config("input_dim, hidden_size and num_layers must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid_config("dropout must lie in [0, 1)"));
        }
        if self.arch == Arch::Transformer {
            if self.heads == 0 || !self.hidden_size.is_multiple_of(self.heads) {
                return Err(Error::invalid_config(format!(
                    "hidden_size {} is not divisible by {} heads",
                    self.hidden_size, self.heads
                )));
            }
            if self.ff_multiplier == 0 {
                return Err(Error::invalid_config("ff_multiplier must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub wall_time_s: f64,
}

/// A classifier together with everything needed to score raw blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceModel {
    pub config: ModelConfig,
    pub params: Params,
    pub scaler: ScalerState,
    pub meta: TrainingMeta,
    /// Block length the model was trained on.
    pub seq_len: usize,
    pub dtw_mode: DtwMode,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionResult {
    pub probability: f64,
    pub label: u8,
    pub threshold_used: f64,
}

impl PredictionResult {
    /// Label 1 iff `probability >= threshold`.
    pub fn new(probability: f64, threshold: f64) -> Self {
        Self {
            probability,
            label: u8::from(probability >= threshold),
            threshold_used: threshold,
        }
    }
}

impl SequenceModel {
    /// An untrained model with freshly initialized parameters and an
    /// identity scaler.
    pub fn new(config: ModelConfig, seq_len: usize) -> Result<Self> {
        let params = init_params(&config)?;
        Ok(Self {
            config,
            params,
            scaler: ScalerState::identity(),
            meta: TrainingMeta::default(),
            seq_len,
            dtw_mode: DtwMode::default(),
        })
    }

    fn prepare<'a>(&self, features: &'a Matrix, already_scaled: bool) -> std::borrow::Cow<'a, Matrix> {
        if already_scaled {
            std::borrow::Cow::Borrowed(features)
        } else {
            std::borrow::Cow::Owned(self.scaler.apply(features))
        }
    }

    /// Probability that the pair walks together.
    pub fn forward(&self, features: &Matrix, already_scaled: bool) -> Result<f64> {
        Ok(self.forward_batch(std::slice::from_ref(features), already_scaled)?[0])
    }

    /// Probabilities for many feature matrices, evaluated in fixed-size
    /// batches. Results do not depend on how inputs are batched.
    pub fn forward_batch(&self, features: &[Matrix], already_scaled: bool) -> Result<Vec<f64>> {
        if features.iter().any(|m| !m.all_finite()) {
            return Err(Error::invalid_input("non-finite feature value"));
        }
        let mut out = Vec::with_capacity(features.len());
        for chunk in features.chunks(INFERENCE_BATCH) {
            let prepared: Vec<_> = chunk.iter().map(|m| self.prepare(m, already_scaled)).collect();
            let refs: Vec<&Matrix> = prepared.iter().map(|c| c.as_ref()).collect();
            out.extend(self.logits(&refs)?.into_iter().map(sigmoid_prob));
        }
        Ok(out)
    }

    fn logits(&self, batch: &[&Matrix]) -> Result<Vec<f64>> {
        // every row of every product only reads its own sample, so batching
        // leaves each result bit-identical
        let mut tape = Tape::new();
        let z = arch::forward_logits(
            &mut tape,
            &self.config,
            &self.params,
            batch,
            &mut arch::Dropout::off(),
            true,
        )?;
        Ok(tape.value(z).as_slice().to_vec())
    }

    /// Featurizes two raw blocks with the model's DTW mode, scales them with
    /// the stored scaler and applies the threshold.
    pub fn predict_pair(
        &self,
        block_a: &[TrajectoryPoint],
        block_b: &[TrajectoryPoint],
        threshold: f64,
    ) -> Result<PredictionResult> {
        let f = featurize_pair(block_a, block_b, self.dtw_mode, DtwEngine::Auto)?;
        Ok(PredictionResult::new(self.forward(&f, false)?, threshold))
    }
}
