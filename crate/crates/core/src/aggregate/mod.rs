//! From pairwise predictions to flocks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize_pair, DtwEngine};
use crate::linalg::Matrix;
use crate::model::{canonical_pair, AgentId, GroupAnnotation};
use crate::par::Execution;
use crate::scene::SceneBin;
use crate::seqnet::SequenceModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub pair: (AgentId, AgentId),
    pub probability: f64,
    pub is_flock: u8,
}

impl PairPrediction {
    pub fn new(a: AgentId, b: AgentId, probability: f64, threshold: f64) -> Result<Self> {
        Ok(Self {
            pair: canonical_pair(a, b)?,
            probability,
            is_flock: u8::from(probability >= threshold),
        })
    }
}

/// Disjoint sets keyed by agent id. Unions make the smaller root the
/// representative; finds compress the traversed path.
#[derive(Clone, Debug, Default)]
pub struct UnionFind {
    parent: HashMap<AgentId, AgentId>,
    traversals: u64,
}

impl UnionFind {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_elements(ids: impl IntoIterator<Item = AgentId>) -> Self {
        let mut uf = Self::new();
        for id in ids {
            uf.insert(id);
        }
        uf
    }

    pub fn insert(&mut self, id: AgentId) {
        self.parent.entry(id).or_insert(id);
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Current parent link, without compressing anything.
    pub fn parent_of(&self, id: AgentId) -> Option<AgentId> {
        self.parent.get(&id).copied()
    }

    /// Total parent links followed by all finds so far.
    pub fn traversals(&self) -> u64 {
        self.traversals
    }

    /// Root of `id` (inserting it if unseen).
    pub fn find_root(&mut self, id: AgentId) -> AgentId {
        self.insert(id);
        let mut root = id;
        loop {
            let p = self.parent[&root];
            self.traversals += 1;
            if p == root {
                break;
            }
            root = p;
        }
        let mut cur = id;
        while cur != root {
            let next = self.parent[&cur];
            self.parent.insert(cur, root);
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: AgentId, b: AgentId) {
        let (ra, rb) = (self.find_root(a), self.find_root(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent.insert(hi, lo);
        }
    }

    /// All components, each sorted, ordered by smallest member.
    pub fn components(&mut self) -> Vec<Vec<AgentId>> {
        let ids: Vec<AgentId> = self.parent.keys().copied().collect();
        let mut by_root: BTreeMap<AgentId, Vec<AgentId>> = BTreeMap::new();
        for id in ids {
            let r = self.find_root(id);
            by_root.entry(r).or_default().push(id);
        }
        let mut comps: Vec<Vec<AgentId>> = by_root
            .into_values()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flock {
    pub size: usize,
    pub members: Vec<AgentId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlockSet {
    pub flocks: Vec<Flock>,
    pub singletons: Vec<AgentId>,
}

impl FlockSet {
    pub fn members(&self) -> BTreeSet<AgentId> {
        self.flocks
            .iter()
            .flat_map(|f| f.members.iter().copied())
            .chain(self.singletons.iter().copied())
            .collect()
    }

    /// Flock index of every agent that belongs to a flock.
    pub fn assignment(&self) -> HashMap<AgentId, usize> {
        self.flocks
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.members.iter().map(move |&m| (m, i)))
            .collect()
    }

    /// True when every flock of `self` lies inside a single flock of
    /// `coarser` (singletons refine anything).
    pub fn refines(&self, coarser: &FlockSet) -> bool {
        let other = coarser.assignment();
        self.flocks.iter().all(|f| {
            let first = other.get(&f.members[0]);
            first.is_some() && f.members.iter().all(|m| other.get(m) == first)
        })
    }
}

/// Scores every member pair of `bin` in canonical order.
pub fn evaluate_all_pairs(
    model: &SequenceModel,
    bin: &SceneBin,
    threshold: f64,
    exec: Execution,
) -> Result<Vec<PairPrediction>> {
    if let Some(l) = bin.sequence_length() {
        if l != model.seq_len {
            return Err(Error::ConfigMismatch {
                model: model.seq_len,
                scene: l,
            });
        }
    }
    let mut ids: Vec<AgentId> = bin.member_ids.clone();
    ids.sort_unstable();
    let pairs: Vec<(AgentId, AgentId)> = ids
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| ids[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let block = |id: AgentId| {
        bin.block(id)
            .ok_or_else(|| Error::invalid_input(format!("agent {id} has no block in bin {}", bin.bin_index)))
    };
    let feats: Vec<Matrix> = exec.try_map(&pairs, |&(a, b)| {
        let f = featurize_pair(block(a)?, block(b)?, model.dtw_mode, DtwEngine::Auto)?;
        Ok::<_, Error>(model.scaler.apply(&f))
    })?;
    let chunks: Vec<&[Matrix]> = feats.chunks(64).collect();
    let probs: Vec<Vec<f64>> = exec.try_map(&chunks, |c| model.forward_batch(c, true))?;
    pairs
        .iter()
        .zip(probs.into_iter().flatten())
        .map(|(&(a, b), p)| PairPrediction::new(a, b, p, threshold))
        .collect()
}

/// Connected components of the positive edges over `all_members`.
pub fn aggregate_flocks(predictions: &[PairPrediction], all_members: &[AgentId]) -> FlockSet {
    let mut uf = UnionFind::with_elements(all_members.iter().copied());
    for p in predictions.iter().filter(|p| p.is_flock == 1) {
        uf.union(p.pair.0, p.pair.1);
    }
    let mut out = FlockSet::default();
    for comp in uf.components() {
        if comp.len() >= 2 {
            out.flocks.push(Flock {
                size: comp.len(),
                members: comp,
            });
        } else {
            out.singletons.push(comp[0]);
        }
    }
    out
}

/// Keeps an edge positive only when it is positive in every run. Runs must
/// cover the same pairs in the same order.
pub fn consistent_edges(runs: &[Vec<PairPrediction>]) -> Result<Vec<PairPrediction>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    let mut out = first.clone();
    for run in &runs[1..] {
        if run.len() != out.len() {
            return Err(Error::invalid_input("runs cover different pair sets"));
        }
        for (o, r) in out.iter_mut().zip(run) {
            if o.pair != r.pair {
                return Err(Error::invalid_input("runs list pairs in different orders"));
            }
            o.is_flock &= r.is_flock;
            o.probability = o.probability.min(r.probability);
        }
    }
    Ok(out)
}

pub fn size_histogram<'a>(sets: impl IntoIterator<Item = &'a FlockSet>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for s in sets {
        for f in &s.flocks {
            *h.entry(f.size).or_insert(0) += 1;
        }
    }
    h
}

/// `{"2": 1528, "3": 448}` — string keys, ascending size.
pub fn histogram_json(h: &BTreeMap<usize, usize>) -> String {
    let body: Vec<String> = h.iter().map(|(k, v)| format!("\"{k}\": {v}")).collect();
    format!("{{{}}}", body.join(", "))
}

/// Counts behind the detection metrics; sums over scenes by [`merge`](Self::merge).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationCounts {
    pub groups: usize,
    pub groups_matched: usize,
    pub true_pairs: usize,
    pub predicted_pairs: usize,
    pub correct_pairs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub exact_match: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No annotated group was present, so `exact_match` is vacuous.
    pub empty_truth: bool,
    /// Nothing was predicted positive, so `precision` is conventional.
    pub no_predictions: bool,
}

impl ValidationCounts {
    pub fn merge(&mut self, o: &ValidationCounts) {
        self.groups += o.groups;
        self.groups_matched += o.groups_matched;
        self.true_pairs += o.true_pairs;
        self.predicted_pairs += o.predicted_pairs;
        self.correct_pairs += o.correct_pairs;
    }

    pub fn metrics(&self) -> ValidationMetrics {
        let ratio = |n: usize, d: usize, empty: f64| if d == 0 { empty } else { n as f64 / d as f64 };
        let exact_match = ratio(self.groups_matched, self.groups, 1.0);
        let precision = ratio(self.correct_pairs, self.predicted_pairs, 1.0);
        let recall = ratio(self.correct_pairs, self.true_pairs, 1.0);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ValidationMetrics {
            exact_match,
            precision,
            recall,
            f1,
            empty_truth: self.groups == 0,
            no_predictions: self.predicted_pairs == 0,
        }
    }
}

/// Annotated groups restricted to `members`; groups left with fewer than two
/// present members are dropped.
pub fn truth_groups(truth: &[GroupAnnotation], members: &BTreeSet<AgentId>) -> Vec<Vec<AgentId>> {
    let mut groups: BTreeSet<Vec<AgentId>> = BTreeSet::new();
    for g in truth {
        let mut m: Vec<AgentId> = g.members().filter(|id| members.contains(id)).collect();
        m.sort_unstable();
        m.dedup();
        if m.len() >= 2 {
            groups.insert(m);
        }
    }
    groups.into_iter().collect()
}

/// Compares one scene's flocks with the annotations. Annotations are
/// restricted to the scene's members.
pub fn validate_counts(detected: &FlockSet, truth: &[GroupAnnotation]) -> ValidationCounts {
    let members = detected.members();
    let groups = truth_groups(truth, &members);
    let detected_sets: BTreeSet<&Vec<AgentId>> = detected.flocks.iter().map(|f| &f.members).collect();
    let mut truth_of: HashMap<AgentId, usize> = HashMap::new();
    for (i, g) in groups.iter().enumerate() {
        for &m in g {
            truth_of.insert(m, i);
        }
    }
    let pairs_in = |n: usize| n * n.saturating_sub(1) / 2;
    let mut correct = 0;
    for f in &detected.flocks {
        let mut per_group: HashMap<usize, usize> = HashMap::new();
        for m in &f.members {
            if let Some(&g) = truth_of.get(m) {
                *per_group.entry(g).or_insert(0) += 1;
            }
        }
        correct += per_group.values().map(|&c| pairs_in(c)).sum::<usize>();
    }
    ValidationCounts {
        groups: groups.len(),
        groups_matched: groups.iter().filter(|g| detected_sets.contains(g)).count(),
        true_pairs: groups.iter().map(|g| pairs_in(g.len())).sum(),
        predicted_pairs: detected.flocks.iter().map(|f| pairs_in(f.size)).sum(),
        correct_pairs: correct,
    }
}

pub fn validate_against_annotations(detected: &FlockSet, truth: &[GroupAnnotation]) -> ValidationMetrics {
    validate_counts(detected, truth).metrics()
}

#[derive(Serialize)]
struct SceneRecord<'a> {
    bin_index: usize,
    flocks: &'a [Flock],
    singletons: &'a [AgentId],
}

/// One JSON line per scene followed by a `{"histogram": {...}}` line.
pub fn flock_report(scenes: &[(usize, FlockSet)]) -> String {
    let mut s = String::new();
    for (bin_index, set) in scenes {
        let rec = SceneRecord {
            bin_index: *bin_index,
            flocks: &set.flocks,
            singletons: &set.singletons,
        };
        let _ = writeln!(s, "{}", serde_json::to_string(&rec).expect("plain data"));
    }
    let h = size_histogram(scenes.iter().map(|(_, f)| f));
    let _ = writeln!(s, "{{\"histogram\": {}}}", histogram_json(&h));
    s
}
