//! Pairwise per-step features.
//!
//! Columns, in order: inter-agent distance, time difference, velocity
//! difference, motion-angle difference, facing-angle difference and the DTW
//! trajectory dissimilarity.

pub mod dtw;
pub mod scaler;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{angle_difference, AgentId, TrajectoryPoint};
use crate::par::Execution;

pub use dtw::{dtw_distance, fast_dtw_distance, prefix_dtw, DtwEngine, Point2};
pub use scaler::{quantile_sorted, ColumnScaler, ScalerKind, ScalerState, COLUMN_SCALERS};

pub const FEATURE_COUNT: usize = 6;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "interDistance",
    "timeDifference",
    "velocityDifference",
    "motionAngleDifference",
    "faceAngleDifference",
    "dtwValues",
];

/// How the pair-level DTW value becomes a per-step column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DtwMode {
    /// Whole-sequence DTW repeated at every step.
    #[default]
    FullBroadcast,
    /// Step `k` carries the DTW of the two length-`k+1` prefixes.
    Prefix,
}

impl DtwMode {
    pub fn name(self) -> &'static str {
        match self {
            DtwMode::FullBroadcast => "full_broadcast",
            DtwMode::Prefix => "prefix",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full_broadcast" | "broadcast" => Some(DtwMode::FullBroadcast),
            "prefix" => Some(DtwMode::Prefix),
            _ => None,
        }
    }
}

/// A featurized pair: an `L x 6` matrix plus the label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub agent_a: AgentId,
    pub agent_b: AgentId,
    pub features: Matrix,
    pub label: u8,
}

impl PairSample {
    pub fn seq_len(&self) -> usize {
        self.features.rows()
    }
}

pub fn inter_distance(p: &TrajectoryPoint, q: &TrajectoryPoint) -> f64 {
    (p.x_mm - q.x_mm).hypot(p.y_mm - q.y_mm)
}

/// Absolute differences of time, velocity and the two angles; angles use
/// circular distance in `[0, pi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbsDiffs {
    pub dt_ms: f64,
    pub dv_mm_s: f64,
    pub dmotion_rad: f64,
    pub dface_rad: f64,
}

pub fn scalar_abs_diffs(p: &TrajectoryPoint, q: &TrajectoryPoint) -> Result<AbsDiffs> {
    Ok(AbsDiffs {
        dt_ms: (p.timestamp_ms - q.timestamp_ms).unsigned_abs() as f64,
        dv_mm_s: (p.velocity_mm_s - q.velocity_mm_s).abs(),
        dmotion_rad: angle_difference(p.motion_angle_rad, q.motion_angle_rad)?,
        dface_rad: angle_difference(p.face_angle_rad, q.face_angle_rad)?,
    })
}

pub fn positions(block: &[TrajectoryPoint]) -> Vec<Point2> {
    block.iter().map(TrajectoryPoint::position).collect()
}

/// Builds the `L x 6` feature matrix of two equally long blocks, aligned by
/// index.
pub fn featurize_pair(
    block_a: &[TrajectoryPoint],
    block_b: &[TrajectoryPoint],
    mode: DtwMode,
    engine: DtwEngine,
) -> Result<Matrix> {
    if block_a.len() != block_b.len() {
        return Err(Error::invalid_input(format!(
            "block lengths differ: {} vs {}",
            block_a.len(),
            block_b.len()
        )));
    }
    if block_a.is_empty() {
        return Err(Error::invalid_input("empty blocks"));
    }
    let n = block_a.len();
    let (pa, pb) = (positions(block_a), positions(block_b));
    let dtw_col = match mode {
        DtwMode::FullBroadcast => vec![engine.distance(&pa, &pb)?; n],
        DtwMode::Prefix => match engine {
            DtwEngine::Exact | DtwEngine::Auto => prefix_dtw(&pa, &pb)?,
            DtwEngine::Fast { .. } => (1..=n)
                .map(|k| engine.distance(&pa[..k], &pb[..k]))
                .collect::<Result<_>>()?,
        },
    };
    let mut m = Matrix::zeros(n, FEATURE_COUNT);
    for (k, (p, q)) in block_a.iter().zip(block_b).enumerate() {
        let d = scalar_abs_diffs(p, q)?;
        m.row_mut(k).copy_from_slice(&[
            inter_distance(p, q),
            d.dt_ms,
            d.dv_mm_s,
            d.dmotion_rad,
            d.dface_rad,
            dtw_col[k],
        ]);
    }
    Ok(m)
}

/// Featurizes many block pairs; `Parallel` spreads pairs across threads.
pub fn featurize_many(
    pairs: &[(&[TrajectoryPoint], &[TrajectoryPoint])],
    mode: DtwMode,
    engine: DtwEngine,
    exec: Execution,
) -> Result<Vec<Matrix>> {
    exec.try_map(pairs, |(a, b)| featurize_pair(a, b, mode, engine))
}
