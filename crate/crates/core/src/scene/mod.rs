//! Time-binned scenes of aligned sequence blocks, and labeled pair datasets.
//!
//! An agent belongs to the bin `floor((t_first - t_min) / T)` where `t_first`
//! is its first record and `t_min` the earliest first record over all agents
//! that survive the length filter. Each member contributes the first `L` of
//! its points as its block.

mod io;
mod pairs;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, Diagnostic};
use crate::model::{AgentId, TrajectoryPoint};

pub use io::{
    read_pair_dataset, read_scene_bin, read_scene_dir, write_pair_dataset, write_scene_bin,
    write_scene_dir, SCENE_FORMAT_VERSION,
};
pub use pairs::{
    build_pair_dataset, interpolate_pair, interpolate_synthetic_positives, split_counts,
    BalanceStrategy, PairDataset, PairDatasetSpec, RawPairSample,
};

pub const DEFAULT_BIN_WIDTH_MS: i64 = 60_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBin {
    pub bin_index: usize,
    pub bin_start_ms: i64,
    pub bin_width_ms: i64,
    /// Ordered by first timestamp, then agent id.
    pub member_ids: Vec<AgentId>,
    pub blocks: BTreeMap<AgentId, Vec<TrajectoryPoint>>,
}

impl SceneBin {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    pub fn block(&self, id: AgentId) -> Option<&[TrajectoryPoint]> {
        self.blocks.get(&id).map(Vec::as_slice)
    }

    /// Common block length, `None` when unfilled or ragged.
    pub fn sequence_length(&self) -> Option<usize> {
        let mut lens = self.blocks.values().map(Vec::len);
        let first = lens.next()?;
        lens.all(|l| l == first).then_some(first)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinAssignment {
    pub bins: Vec<SceneBin>,
    /// Agents with fewer than `L` points.
    pub excluded: Vec<AgentId>,
    /// Earliest first timestamp among retained agents.
    pub t_min_ms: Option<i64>,
}

pub fn bin_index(t_first_ms: i64, t_min_ms: i64, bin_width_ms: i64) -> usize {
    ((t_first_ms - t_min_ms).div_euclid(bin_width_ms)) as usize
}

fn check_params(bin_width_ms: i64, seq_len: usize) -> Result<()> {
    if bin_width_ms <= 0 {
        return Err(Error::InvalidBinWidth(bin_width_ms));
    }
    if seq_len <= 1 {
        return Err(Error::InvalidSequenceLength(seq_len));
    }
    Ok(())
}

/// Assigns every agent with at least `seq_len` points to the bin of its first
/// record. Blocks are left empty; see [`fill_sequence_blocks`].
pub fn assign_time_bins(dataset: &Dataset, bin_width_ms: i64, seq_len: usize) -> Result<BinAssignment> {
    check_params(bin_width_ms, seq_len)?;
    let mut excluded = Vec::new();
    let mut firsts = Vec::new();
    for (&id, traj) in &dataset.trajectories {
        match traj.first_timestamp() {
            Some(t) if traj.len() >= seq_len => firsts.push((t, id)),
            _ => excluded.push(id),
        }
    }
    let Some(t_min) = firsts.iter().map(|&(t, _)| t).min() else {
        return Ok(BinAssignment {
            bins: Vec::new(),
            excluded,
            t_min_ms: None,
        });
    };
    firsts.sort_unstable();
    let mut by_bin: BTreeMap<usize, Vec<AgentId>> = BTreeMap::new();
    for (t, id) in firsts {
        by_bin
            .entry(bin_index(t, t_min, bin_width_ms))
            .or_default()
            .push(id);
    }
    let bins = by_bin
        .into_iter()
        .map(|(idx, member_ids)| SceneBin {
            bin_index: idx,
            bin_start_ms: t_min + idx as i64 * bin_width_ms,
            bin_width_ms,
            member_ids,
            blocks: BTreeMap::new(),
        })
        .collect();
    Ok(BinAssignment {
        bins,
        excluded,
        t_min_ms: Some(t_min),
    })
}

/// Options for [`fill_sequence_blocks`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockOptions {
    /// When set, a block whose consecutive records are further apart than
    /// this is not considered consecutive and the member is dropped.
    pub max_gap_ms: Option<i64>,
}

/// Fills each member's block with its first `seq_len` points. Members that
/// cannot supply them are dropped with a diagnostic; bins left empty are
/// omitted.
pub fn fill_sequence_blocks(
    dataset: &Dataset,
    bins: Vec<SceneBin>,
    seq_len: usize,
    opts: BlockOptions,
) -> (Vec<SceneBin>, Vec<Diagnostic>) {
    let mut diagnostics = Vec::new();
    let mut out = Vec::with_capacity(bins.len());
    for mut bin in bins {
        let mut kept = Vec::with_capacity(bin.member_ids.len());
        let mut blocks = BTreeMap::new();
        for &id in &bin.member_ids {
            let drop = |reason: String| Diagnostic::DroppedFromBin {
                agent_id: id,
                bin_index: bin.bin_index,
                reason,
            };
            let Some(traj) = dataset.trajectory(id) else {
                diagnostics.push(drop("no trajectory".into()));
                continue;
            };
            if traj.len() < seq_len {
                diagnostics.push(drop(format!("{} points, {seq_len} needed", traj.len())));
                continue;
            }
            let block = &traj.points()[..seq_len];
            if let Some(gap) = opts.max_gap_ms {
                if let Some(w) = block
                    .windows(2)
                    .find(|w| w[1].timestamp_ms - w[0].timestamp_ms > gap)
                {
                    diagnostics.push(drop(format!(
                        "gap of {} ms at {}",
                        w[1].timestamp_ms - w[0].timestamp_ms,
                        w[0].timestamp_ms
                    )));
                    continue;
                }
            }
            kept.push((block[0].timestamp_ms, id));
            blocks.insert(id, block.to_vec());
        }
        if kept.is_empty() {
            continue;
        }
        kept.sort_unstable();
        bin.member_ids = kept.into_iter().map(|(_, id)| id).collect();
        bin.blocks = blocks;
        out.push(bin);
    }
    (out, diagnostics)
}

/// Convenience: [`assign_time_bins`] followed by [`fill_sequence_blocks`].
pub fn build_scenes(
    dataset: &Dataset,
    bin_width_ms: i64,
    seq_len: usize,
    opts: BlockOptions,
) -> Result<(Vec<SceneBin>, BinAssignment, Vec<Diagnostic>)> {
    let assignment = assign_time_bins(dataset, bin_width_ms, seq_len)?;
    let (bins, diags) = fill_sequence_blocks(dataset, assignment.bins.clone(), seq_len, opts);
    Ok((bins, assignment, diags))
}
