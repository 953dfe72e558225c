use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{extract_pair_labels, list_singletons, Dataset};
use crate::model::{normalize_angle, AgentId, TrajectoryPoint};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BalanceStrategy {
    #[default]
    WeightedLoss,
    Oversample,
    Undersample,
    SyntheticInterpolation,
}

impl BalanceStrategy {
    pub fn name(self) -> &'static str {
        match self {
            BalanceStrategy::WeightedLoss => "weighted_loss",
            BalanceStrategy::Oversample => "oversample",
            BalanceStrategy::Undersample => "undersample",
            BalanceStrategy::SyntheticInterpolation => "synthetic_interpolation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "weighted_loss" => BalanceStrategy::WeightedLoss,
            "oversample" => BalanceStrategy::Oversample,
            "undersample" => BalanceStrategy::Undersample,
            "synthetic_interpolation" => BalanceStrategy::SyntheticInterpolation,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDatasetSpec {
    pub sequence_length: usize,
    pub negative_ratio: f64,
    pub balance_strategy: BalanceStrategy,
    pub train_fraction: f64,
    pub rng_seed: u64,
}

impl PairDatasetSpec {
    pub fn new(sequence_length: usize, rng_seed: u64) -> Self {
        Self {
            sequence_length,
            negative_ratio: 1.0,
            balance_strategy: BalanceStrategy::default(),
            train_fraction: 0.8,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequence_length <= 1 {
            return Err(Error::InvalidSequenceLength(self.sequence_length));
        }
        if !(self.negative_ratio > 0.0 && self.negative_ratio.is_finite()) {
            return Err(Error::invalid_config("negative_ratio must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid_config("train_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A labeled pair with both aligned `L`-point blocks, before featurization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPairSample {
    pub id: usize,
    pub agent_a: AgentId,
    pub agent_b: AgentId,
    pub block_a: Vec<TrajectoryPoint>,
    pub block_b: Vec<TrajectoryPoint>,
    pub label: u8,
    /// Produced by interpolation or oversampling rather than read from data.
    pub synthetic: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub sequence_length: usize,
    pub train: Vec<RawPairSample>,
    pub test: Vec<RawPairSample>,
    /// `(w0, w1)`; `n / (2 n_c)` over the train split under weighted loss,
    /// `(1, 1)` otherwise.
    pub class_weights: (f64, f64),
    /// Agents dropped for having fewer than `L` points.
    pub excluded_agents: Vec<AgentId>,
}

impl PairDataset {
    pub fn total(&self) -> usize {
        self.train.len() + self.test.len()
    }
}

/// Train counts per class: `round(f * n)` overall, allocated to the classes
/// by largest remainder (positives win ties).
pub fn split_counts(n_neg: usize, n_pos: usize, train_fraction: f64) -> (usize, usize) {
    let total = ((n_neg + n_pos) as f64 * train_fraction).round() as usize;
    let q = [n_neg as f64 * train_fraction, n_pos as f64 * train_fraction];
    let mut alloc = [q[0].floor() as usize, q[1].floor() as usize];
    let mut remaining = total.saturating_sub(alloc[0] + alloc[1]);
    let mut order = [1usize, 0];
    order.sort_by(|&a, &b| (q[b] - q[b].floor()).total_cmp(&(q[a] - q[a].floor())));
    for &c in order.iter().cycle().take(4) {
        if remaining == 0 {
            break;
        }
        let cap = if c == 0 { n_neg } else { n_pos };
        if alloc[c] < cap {
            alloc[c] += 1;
            remaining -= 1;
        }
    }
    (alloc[0], alloc[1])
}

fn prefix(dataset: &Dataset, id: AgentId, len: usize) -> Option<&[TrajectoryPoint]> {
    let pts = dataset.trajectory(id)?.points();
    (pts.len() >= len).then(|| &pts[..len])
}

fn sample_negative_pairs(
    pool: &[AgentId],
    needed: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(AgentId, AgentId)>> {
    let n = pool.len();
    let available = n * n.saturating_sub(1) / 2;
    if needed > available {
        return Err(Error::InsufficientNegatives { needed, available });
    }
    if needed * 4 > available {
        let mut all: Vec<(AgentId, AgentId)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (pool[i], pool[j]))
            .collect();
        all.shuffle(rng);
        all.truncate(needed);
        return Ok(all);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(needed);
    while out.len() < needed {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let pair = (pool[i.min(j)], pool[i.max(j)]);
        if seen.insert(pair) {
            out.push(pair);
        }
    }
    Ok(out)
}

/// Builds the labeled pair set: annotated size-2 groups are positives,
/// random singleton pairs are negatives; both are trimmed to the first `L`
/// points and split into train/test, stratified by label.
pub fn build_pair_dataset(dataset: &Dataset, spec: &PairDatasetSpec) -> Result<PairDataset> {
    spec.validate()?;
    let l = spec.sequence_length;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let excluded_agents: Vec<AgentId> = dataset
        .trajectories
        .iter()
        .filter(|(_, t)| t.len() < l)
        .map(|(&id, _)| id)
        .collect();

    let positives: Vec<(AgentId, AgentId)> = extract_pair_labels(dataset)
        .into_iter()
        .filter(|p| prefix(dataset, p.agent_a, l).is_some() && prefix(dataset, p.agent_b, l).is_some())
        .map(|p| (p.agent_a, p.agent_b))
        .collect();
    let mut out = PairDataset {
        sequence_length: l,
        class_weights: (1.0, 1.0),
        excluded_agents,
        ..Default::default()
    };
    if positives.is_empty() {
        return Ok(out);
    }
    let pool: Vec<AgentId> = list_singletons(dataset)
        .into_iter()
        .filter(|&id| prefix(dataset, id, l).is_some())
        .collect();
    let needed = (spec.negative_ratio * positives.len() as f64).round() as usize;
    let negatives = sample_negative_pairs(&pool, needed, &mut rng)?;

    let make = |id: usize, (a, b): (AgentId, AgentId), label: u8| RawPairSample {
        id,
        agent_a: a,
        agent_b: b,
        block_a: prefix(dataset, a, l).expect("filtered").to_vec(),
        block_b: prefix(dataset, b, l).expect("filtered").to_vec(),
        label,
        synthetic: false,
    };
    let mut pos: Vec<RawPairSample> = positives
        .iter()
        .enumerate()
        .map(|(i, &p)| make(i, p, 1))
        .collect();
    let mut neg: Vec<RawPairSample> = negatives
        .iter()
        .enumerate()
        .map(|(i, &p)| make(positives.len() + i, p, 0))
        .collect();

    let (n_train_neg, n_train_pos) = split_counts(neg.len(), pos.len(), spec.train_fraction);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let test_pos = pos.split_off(n_train_pos);
    let test_neg = neg.split_off(n_train_neg);
    let mut test: Vec<RawPairSample> = test_pos.into_iter().chain(test_neg).collect();
    test.sort_by_key(|s| s.id);

    let next_id = positives.len() + negatives.len();
    balance(&mut pos, &mut neg, spec.balance_strategy, next_id, &mut rng)?;
    let mut train: Vec<RawPairSample> = pos.into_iter().chain(neg).collect();
    train.sort_by_key(|s| s.id);

    if spec.balance_strategy == BalanceStrategy::WeightedLoss {
        out.class_weights = class_weights(&train);
    }
    out.train = train;
    out.test = test;
    Ok(out)
}

/// `n / (2 n_c)` per class; a missing class gets weight 1.
pub fn class_weights(samples: &[RawPairSample]) -> (f64, f64) {
    let n = samples.len() as f64;
    let n1 = samples.iter().filter(|s| s.label == 1).count() as f64;
    let n0 = n - n1;
    let w = |nc: f64| if nc > 0.0 { n / (2.0 * nc) } else { 1.0 };
    (w(n0), w(n1))
}

fn balance(
    pos: &mut Vec<RawPairSample>,
    neg: &mut Vec<RawPairSample>,
    strategy: BalanceStrategy,
    mut next_id: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if pos.len() == neg.len() || pos.is_empty() || neg.is_empty() {
        return Ok(());
    }
    let (minority, majority) = if pos.len() < neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let deficit = majority.len() - minority.len();
    match strategy {
        BalanceStrategy::WeightedLoss => {}
        BalanceStrategy::Undersample => {
            majority.shuffle(rng);
            majority.truncate(minority.len());
        }
        BalanceStrategy::SyntheticInterpolation if minority[0].label == 1 && minority.len() >= 2 => {
            let mut extra =
                interpolate_synthetic_positives(minority, deficit, rng.random::<u64>())?;
            for s in &mut extra {
                s.id = next_id;
                next_id += 1;
            }
            minority.extend(extra);
        }
        // interpolation only makes sense for positives; fall back to copies
        BalanceStrategy::Oversample | BalanceStrategy::SyntheticInterpolation => {
            let copies: Vec<RawPairSample> = (0..deficit)
                .map(|_| {
                    let mut s = minority.choose(rng).expect("non-empty").clone();
                    s.id = next_id;
                    s.synthetic = true;
                    next_id += 1;
                    s
                })
                .collect();
            minority.extend(copies);
        }
    }
    Ok(())
}

fn lerp_angle(a: f64, b: f64, lambda: f64) -> f64 {
    let d = normalize_angle(b - a).unwrap_or(0.0);
    normalize_angle(a + (1.0 - lambda) * d).unwrap_or(a)
}

fn lerp_point(p: &TrajectoryPoint, q: &TrajectoryPoint, lambda: f64) -> TrajectoryPoint {
    // written so that identical inputs reproduce exactly
    let mix = |x: f64, y: f64| x + (1.0 - lambda) * (y - x);
    TrajectoryPoint {
        timestamp_ms: mix(p.timestamp_ms as f64, q.timestamp_ms as f64).round() as i64,
        agent_id: p.agent_id,
        x_mm: mix(p.x_mm, q.x_mm),
        y_mm: mix(p.y_mm, q.y_mm),
        velocity_mm_s: mix(p.velocity_mm_s, q.velocity_mm_s),
        motion_angle_rad: lerp_angle(p.motion_angle_rad, q.motion_angle_rad, lambda),
        face_angle_rad: lerp_angle(p.face_angle_rad, q.face_angle_rad, lambda),
    }
}

/// Pointwise convex combination `lambda * p + (1 - lambda) * q`; angles move
/// along the shorter arc. Ids and agents are taken from `p`.
pub fn interpolate_pair(p: &RawPairSample, q: &RawPairSample, lambda: f64) -> RawPairSample {
    let blend = |x: &[TrajectoryPoint], y: &[TrajectoryPoint]| -> Vec<TrajectoryPoint> {
        x.iter().zip(y).map(|(a, b)| lerp_point(a, b, lambda)).collect()
    };
    RawPairSample {
        id: p.id,
        agent_a: p.agent_a,
        agent_b: p.agent_b,
        block_a: blend(&p.block_a, &q.block_a),
        block_b: blend(&p.block_b, &q.block_b),
        label: 1,
        synthetic: true,
    }
}

/// Creates `k` extra positives, each interpolated between two distinct
/// randomly chosen positives with `lambda ~ U(0.25, 0.75)`. New ids continue
/// after the largest id in `samples`.
pub fn interpolate_synthetic_positives(
    samples: &[RawPairSample],
    k: usize,
    rng_seed: u64,
) -> Result<Vec<RawPairSample>> {
    let positives: Vec<&RawPairSample> = samples.iter().filter(|s| s.label == 1).collect();
    if positives.len() < 2 {
        return Err(Error::CannotInterpolate(positives.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let first_id = samples.iter().map(|s| s.id + 1).max().unwrap_or(0);
    let mut out = Vec::with_capacity(k);
    for next_id in first_id..first_id + k {
        let i = rng.random_range(0..positives.len());
        let mut j = rng.random_range(0..positives.len() - 1);
        if j >= i {
            j += 1;
        }
        let lambda = rng.random_range(0.25..0.75);
        let mut s = interpolate_pair(positives[i], positives[j], lambda);
        s.id = next_id;
        out.push(s);
    }
    Ok(out)
}
