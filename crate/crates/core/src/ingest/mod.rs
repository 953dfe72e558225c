//! Dataset ingest: trajectory CSV, group annotation files and a synthetic
//! generator producing datasets of the same shape.

mod groups;
mod synthetic;
mod trajectories;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{canonical_pair, AgentId, GroupAnnotation, PairLabel, Trajectory};

pub use groups::{parse_group_file, write_group_file};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use trajectories::{
    format_timestamp, parse_timestamp_ms, parse_trajectory_csv, write_points, write_points_to_string,
    write_trajectory_csv,
    ParseOptions, TrajectoryParse,
};

/// Non-fatal findings reported by the parsers and dataset assembly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnostic {
    HeaderSkipped { line: usize },
    MalformedRow { line: usize, reason: String },
    DuplicateRecord { line: usize, agent_id: AgentId, timestamp_ms: i64 },
    OneSidedAnnotation { pedestrian_id: AgentId, partner_id: AgentId },
    MirroredAnnotation { pedestrian_id: AgentId, partner_id: AgentId },
    UnresolvedPartner { pedestrian_id: AgentId, partner_id: AgentId },
    DroppedFromBin { agent_id: AgentId, bin_index: usize, reason: String },
    DegenerateScale { column: usize },
}

impl Diagnostic {
    /// Expected in well-formed input (a header line, both members of a pair
    /// listing each other); not worth a warning.
    pub fn is_routine(&self) -> bool {
        matches!(
            self,
            Diagnostic::HeaderSkipped { .. } | Diagnostic::MirroredAnnotation { .. }
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::HeaderSkipped { line } => write!(f, "line {line}: header row skipped"),
            Diagnostic::MalformedRow { line, reason } => write!(f, "line {line}: {reason}"),
            Diagnostic::DuplicateRecord {
                line,
                agent_id,
                timestamp_ms,
            } => write!(
                f,
                "line {line}: duplicate record for agent {agent_id} at {timestamp_ms} ms"
            ),
            Diagnostic::OneSidedAnnotation {
                pedestrian_id,
                partner_id,
            } => write!(
                f,
                "{pedestrian_id} lists {partner_id} as partner but {partner_id} does not list {pedestrian_id}"
            ),
            Diagnostic::MirroredAnnotation {
                pedestrian_id,
                partner_id,
            } => write!(f, "mirrored annotation {pedestrian_id} <-> {partner_id} collapsed"),
            Diagnostic::UnresolvedPartner {
                pedestrian_id,
                partner_id,
            } => write!(
                f,
                "partner {partner_id} of {pedestrian_id} has no trajectory"
            ),
            Diagnostic::DroppedFromBin {
                agent_id,
                bin_index,
                reason,
            } => write!(f, "agent {agent_id} dropped from bin {bin_index}: {reason}"),
            Diagnostic::DegenerateScale { column } => {
                write!(f, "feature column {column} has zero spread; scaled to zeros")
            }
        }
    }
}

/// Trajectories plus group annotations for one recording (e.g. one day).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub source_label: String,
    pub trajectories: BTreeMap<AgentId, Trajectory>,
    pub groups: Vec<GroupAnnotation>,
    /// Annotated ids that have no trajectory.
    pub unresolved_ids: Vec<AgentId>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Dataset {
    /// Assembles a dataset and runs the cross-file consistency checks.
    pub fn new(
        source_label: impl Into<String>,
        trajectories: BTreeMap<AgentId, Trajectory>,
        groups: Vec<GroupAnnotation>,
    ) -> Self {
        let mut ds = Dataset {
            source_label: source_label.into(),
            trajectories,
            groups,
            unresolved_ids: Vec::new(),
            diagnostics: Vec::new(),
        };
        ds.check_annotations();
        ds
    }

    pub fn empty(source_label: impl Into<String>) -> Self {
        Self::new(source_label, BTreeMap::new(), Vec::new())
    }

    fn check_annotations(&mut self) {
        let listed: BTreeMap<AgentId, &GroupAnnotation> =
            self.groups.iter().map(|g| (g.pedestrian_id, g)).collect();
        let mut unresolved = BTreeSet::new();
        let mut seen_mirror = BTreeSet::new();
        for g in &self.groups {
            for id in g.members() {
                if !self.trajectories.contains_key(&id) {
                    unresolved.insert(id);
                }
            }
            for &p in &g.partner_ids {
                if !self.trajectories.contains_key(&p) {
                    self.diagnostics.push(Diagnostic::UnresolvedPartner {
                        pedestrian_id: g.pedestrian_id,
                        partner_id: p,
                    });
                }
                match listed.get(&p) {
                    Some(other) if other.partner_ids.contains(&g.pedestrian_id) => {
                        if let Ok(pair) = canonical_pair(g.pedestrian_id, p) {
                            if seen_mirror.insert(pair) {
                                self.diagnostics.push(Diagnostic::MirroredAnnotation {
                                    pedestrian_id: pair.0,
                                    partner_id: pair.1,
                                });
                            }
                        }
                    }
                    Some(_) => self.diagnostics.push(Diagnostic::OneSidedAnnotation {
                        pedestrian_id: g.pedestrian_id,
                        partner_id: p,
                    }),
                    // partner has no row of its own; accepted as is
                    None => {}
                }
            }
        }
        self.unresolved_ids = unresolved.into_iter().collect();
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.trajectories.keys().copied()
    }

    pub fn trajectory(&self, id: AgentId) -> Option<&Trajectory> {
        self.trajectories.get(&id)
    }

    /// Ids that appear anywhere in a group annotation.
    pub fn annotated_ids(&self) -> BTreeSet<AgentId> {
        self.groups.iter().flat_map(|g| g.members()).collect()
    }

    pub fn point_count(&self) -> usize {
        self.trajectories.values().map(Trajectory::len).sum()
    }
}

/// Positive training labels: one per annotated group of size exactly 2.
pub fn extract_pair_labels(dataset: &Dataset) -> Vec<PairLabel> {
    let pairs: BTreeSet<(AgentId, AgentId)> = dataset
        .groups
        .iter()
        .filter(|g| g.group_size == 2)
        .filter_map(|g| canonical_pair(g.pedestrian_id, g.partner_ids[0]).ok())
        .collect();
    pairs
        .into_iter()
        .map(|(a, b)| PairLabel {
            agent_a: a,
            agent_b: b,
            label: 1,
        })
        .collect()
}

/// Agents with a trajectory that no annotation mentions.
pub fn list_singletons(dataset: &Dataset) -> Vec<AgentId> {
    let annotated = dataset.annotated_ids();
    dataset
        .agent_ids()
        .filter(|id| !annotated.contains(id))
        .collect()
}

/// Reads a trajectory CSV and, optionally, its group file.
pub fn read_dataset(trajectories: &Path, groups: Option<&Path>, opts: &ParseOptions) -> Result<Dataset> {
    let open = |p: &Path| {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| Error::invalid_input(format!("{}: {e}", p.display())))
    };
    let parsed = parse_trajectory_csv(open(trajectories)?, opts)?;
    let groups = match groups {
        Some(g) => parse_group_file(open(g)?)?,
        None => Vec::new(),
    };
    let mut ds = Dataset::new(trajectories.display().to_string(), parsed.trajectories, groups);
    let mut diags = parsed.diagnostics;
    diags.append(&mut ds.diagnostics);
    ds.diagnostics = diags;
    Ok(ds)
}
