//! End-to-end glue: pair dataset → features → trained model → flocks.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aggregate::{aggregate_flocks, evaluate_all_pairs, FlockSet, PairPrediction};
use crate::error::{Error, Result};
use crate::features::{featurize_pair, DtwEngine, DtwMode, PairSample, ScalerState};
use crate::par::Execution;
use crate::ingest::Dataset;
use crate::scene::{build_scenes, BlockOptions, PairDataset, RawPairSample, SceneBin};
use crate::seqnet::{evaluate, train, ModelConfig, SequenceModel, TrainConfig, TrainingHistory};

/// Share of the training split held back for early stopping.
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.1;

pub fn featurize_samples(
    samples: &[RawPairSample],
    mode: DtwMode,
    engine: DtwEngine,
    exec: Execution,
) -> Result<Vec<PairSample>> {
    exec.try_map(samples, |s| {
        Ok(PairSample {
            agent_a: s.agent_a,
            agent_b: s.agent_b,
            features: featurize_pair(&s.block_a, &s.block_b, mode, engine)?,
            label: s.label,
        })
    })
}

/// Stratified carve: about `fraction` of each class (at least one sample of
/// a class that has two or more) goes to the second set.
pub fn split_validation(
    samples: Vec<PairSample>,
    fraction: f64,
    seed: u64,
) -> (Vec<PairSample>, Vec<PairSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut keep, mut held) = (Vec::new(), Vec::new());
    for label in [0u8, 1] {
        let mut class: Vec<PairSample> = samples.iter().filter(|s| s.label == label).cloned().collect();
        class.shuffle(&mut rng);
        let mut n_val = (class.len() as f64 * fraction).round() as usize;
        if n_val == 0 && class.len() >= 2 && fraction > 0.0 {
            n_val = 1;
        }
        held.extend(class.drain(..n_val));
        keep.extend(class);
    }
    (keep, held)
}

#[derive(Clone, Debug)]
pub struct RunSettings {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dtw_mode: DtwMode,
    pub dtw_engine: DtwEngine,
    pub validation_fraction: f64,
    /// Use the pair dataset's class weights instead of `train.class_weights`.
    pub use_dataset_weights: bool,
    pub exec: Execution,
}

impl RunSettings {
    pub fn new(model: ModelConfig, train: TrainConfig) -> Self {
        Self {
            model,
            train,
            dtw_mode: DtwMode::default(),
            dtw_engine: DtwEngine::Auto,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            use_dataset_weights: true,
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub model: SequenceModel,
    pub history: TrainingHistory,
    pub test_loss: f64,
    /// Accuracy at probability 0.5 on the test split.
    pub test_accuracy: f64,
    pub wall_time_s: f64,
}

/// Featurizes the pair dataset, fits scalers on the training portion only,
/// trains and scores the test split.
pub fn train_on_pairs(pairs: &PairDataset, settings: &RunSettings) -> Result<TrainedRun> {
    let (mode, engine, exec) = (settings.dtw_mode, settings.dtw_engine, settings.exec);
    let train_all = featurize_samples(&pairs.train, mode, engine, exec)?;
    let test = featurize_samples(&pairs.test, mode, engine, exec)?;
    let (train_part, val_part) =
        split_validation(train_all, settings.validation_fraction, settings.train.seed ^ 0x5eed);
    if train_part.is_empty() || val_part.is_empty() {
        return Err(Error::invalid_input(format!(
            "not enough samples to train ({} training, {} validation)",
            train_part.len(),
            val_part.len()
        )));
    }
    let mut model = SequenceModel::new(settings.model.clone(), pairs.sequence_length)?;
    model.dtw_mode = mode;
    model.scaler = ScalerState::fit(&train_part)?;
    let mut cfg = settings.train.clone();
    if settings.use_dataset_weights {
        cfg.class_weights = pairs.class_weights;
    }
    let (model, history) = train(&model, &train_part, &val_part, &cfg)?;
    let scaled: Vec<PairSample> = test.iter().map(|s| model.scaler.apply_sample(s)).collect();
    let (test_loss, test_accuracy) = evaluate(&model, &scaled, (1.0, 1.0))?;
    Ok(TrainedRun {
        wall_time_s: model.meta.wall_time_s,
        model,
        history,
        test_loss,
        test_accuracy,
    })
}

#[derive(Clone, Debug)]
pub struct SceneDetection {
    pub bin_index: usize,
    pub predictions: Vec<PairPrediction>,
    pub flocks: FlockSet,
}

/// Evaluates every pair of every bin and merges positive pairs. Scenes are
/// processed one after another; pairs within a scene follow `exec`.
pub fn detect_scenes(
    model: &SequenceModel,
    bins: &[SceneBin],
    threshold: f64,
    exec: Execution,
) -> Result<Vec<SceneDetection>> {
    bins.iter()
        .map(|bin| {
            let predictions = evaluate_all_pairs(model, bin, threshold, exec)?;
            let flocks = aggregate_flocks(&predictions, &bin.member_ids);
            Ok(SceneDetection {
                bin_index: bin.bin_index,
                predictions,
                flocks,
            })
        })
        .collect()
}

/// Temporal consistency filter. Each bin is scored again on every member's
/// next `windows - 1` consecutive length-L blocks; an edge stays positive only
/// if it is positive in all of them. Pairs where a member runs out of points
/// keep the decisions made so far. `windows <= 1` leaves `detections` alone.
pub fn confirm_over_windows(
    model: &SequenceModel,
    dataset: &Dataset,
    bins: &[SceneBin],
    detections: &mut [SceneDetection],
    threshold: f64,
    windows: usize,
    exec: Execution,
) -> Result<()> {
    let l = model.seq_len;
    for k in 1..windows {
        for (bin, det) in bins.iter().zip(detections.iter_mut()) {
            debug_assert_eq!(bin.bin_index, det.bin_index);
            let shifted = shifted_bin(dataset, bin, k * l, l);
            let later: HashMap<_, _> = evaluate_all_pairs(model, &shifted, threshold, exec)?
                .into_iter()
                .map(|p| (p.pair, p))
                .collect();
            for p in &mut det.predictions {
                if let Some(q) = later.get(&p.pair) {
                    p.is_flock &= q.is_flock;
                    p.probability = p.probability.min(q.probability);
                }
            }
            det.flocks = aggregate_flocks(&det.predictions, &bin.member_ids);
        }
    }
    Ok(())
}

fn shifted_bin(dataset: &Dataset, bin: &SceneBin, offset: usize, len: usize) -> SceneBin {
    let mut out = SceneBin {
        bin_index: bin.bin_index,
        bin_start_ms: bin.bin_start_ms,
        bin_width_ms: bin.bin_width_ms,
        member_ids: Vec::new(),
        blocks: Default::default(),
    };
    for &id in &bin.member_ids {
        if let Some(t) = dataset.trajectory(id).filter(|t| t.len() >= offset + len) {
            out.member_ids.push(id);
            out.blocks.insert(id, t.points()[offset..offset + len].to_vec());
        }
    }
    out
}

/// Scenes of `dataset` at the model's L, detected and optionally confirmed
/// over `windows` consecutive blocks.
pub fn detect_dataset(
    model: &SequenceModel,
    dataset: &Dataset,
    bin_width_ms: i64,
    threshold: f64,
    windows: usize,
    exec: Execution,
) -> Result<Vec<SceneDetection>> {
    let (bins, _, _) = build_scenes(dataset, bin_width_ms, model.seq_len, BlockOptions::default())?;
    let mut det = detect_scenes(model, &bins, threshold, exec)?;
    confirm_over_windows(model, dataset, &bins, &mut det, threshold, windows, exec)?;
    Ok(det)
}
