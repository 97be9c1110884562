//! Single-tree training: level-wise growth mixing static classification
//! splits with temporal transition splits.
//!
//! A tree grows one whole depth level at a time. Every splittable frontier
//! node is first assigned a criterion by coin flip: *classification* nodes
//! pick the candidate split minimizing the count-weighted label entropy of
//! their children and are then frozen; *transition* nodes start from that
//! same greedy choice and are then refined by coordinate descent, each in
//! turn re-optimizing the transition-set entropy its own split can affect
//! while every other node on the level stays fixed. Nodes that stop
//! splitting stay in the transition bookkeeping as single buckets, so
//! active nodes keep seeing transitions into and out of them.
//!
//! The rng consumption order is part of the training contract (it is what
//! makes runs reproducible and lets an external reference replicate a
//! tree): per level, first one `f64` draw per splittable node for the
//! criterion flip in node-id order, then candidate sampling node-by-node
//! in id order for classification nodes, then for transition nodes, then
//! per descent sweep one candidate resample per transition node in id
//! order.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::stats::{
    child_ids, classification_objective, weighted_entropy, LabelHistogram, NodeId,
    TransitionHistogram, TransitionSetTable,
};

// ── Configuration ────────────────────────────────────────────────────────

/// Knobs for growing one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeTrainConfig {
    /// Maximum tree depth; the root sits at depth 0.
    pub max_depth: usize,
    /// Nodes with fewer samples become leaves.
    pub min_samples_split: usize,
    /// Probability that a splittable node optimizes the transition
    /// criterion instead of the classification criterion.
    pub transition_node_prob: f64,
    /// Features sampled (without replacement) per candidate set.
    pub n_candidate_features: usize,
    /// Thresholds drawn per sampled feature.
    pub n_candidate_thresholds: usize,
    /// Upper bound on coordinate-descent sweeps per level; descent also
    /// stops early when a full sweep changes nothing.
    pub coordinate_descent_sweeps: usize,
    /// Leaf pairs with fewer training transitions than this store no
    /// transition distribution.
    pub min_transition_support: usize,
    /// Additive smoothing mass for leaf distributions.
    pub laplace_alpha: f64,
    /// Temporal distance between paired frames; `None` disables the
    /// transition machinery entirely (plain classification tree).
    pub d: Option<usize>,
}

impl Default for TreeTrainConfig {
    fn default() -> Self {
        TreeTrainConfig {
            max_depth: 8,
            min_samples_split: 10,
            transition_node_prob: 0.5,
            n_candidate_features: 8,
            n_candidate_thresholds: 10,
            coordinate_descent_sweeps: 10,
            min_transition_support: 10,
            laplace_alpha: 1.0,
            d: None,
        }
    }
}

impl TreeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be ≥ 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be ≥ 2".into()));
        }
        if !(0.0..=1.0).contains(&self.transition_node_prob) {
            return Err(Error::Config(format!(
                "transition_node_prob {} not in [0, 1]",
                self.transition_node_prob
            )));
        }
        if self.n_candidate_features < 1 || self.n_candidate_thresholds < 1 {
            return Err(Error::Config(
                "need at least one candidate feature and threshold".into(),
            ));
        }
        if !(self.laplace_alpha > 0.0 && self.laplace_alpha.is_finite()) {
            return Err(Error::Config(format!(
                "laplace_alpha {} must be positive",
                self.laplace_alpha
            )));
        }
        match self.d {
            Some(0) => return Err(Error::Config("temporal distance d must be ≥ 1".into())),
            None if self.transition_node_prob > 0.0 => {
                return Err(Error::Config(
                    "transition_node_prob > 0 requires a temporal distance d".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

// ── Training data layout ─────────────────────────────────────────────────

/// Flattened training frames: one row per frame, sequence boundaries kept
/// so temporal pairs never cross them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMatrix {
    data: Vec<f64>,
    labels: Vec<Label>,
    seq_ranges: Vec<(usize, usize)>,
    dim: usize,
    num_labels: usize,
}

impl TrainMatrix {
    pub fn from_feature_sequences<'a>(
        seqs: impl IntoIterator<Item = &'a FeatureSequence>,
        num_labels: usize,
    ) -> Result<Self> {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut seq_ranges = Vec::new();
        let mut dim = None;
        for seq in seqs {
            let start = labels.len();
            for frame in &seq.frames {
                match dim {
                    None => dim = Some(frame.vector.len()),
                    Some(d) if d != frame.vector.len() => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: frame.vector.len(),
                        });
                    }
                    Some(_) => {}
                }
                if frame.label >= num_labels {
                    return Err(Error::Validation(format!(
                        "frame label {} outside vocabulary of {num_labels}",
                        frame.label
                    )));
                }
                data.extend_from_slice(&frame.vector);
                labels.push(frame.label);
            }
            if labels.len() > start {
                seq_ranges.push((start, labels.len()));
            }
        }
        if labels.is_empty() {
            return Err(Error::EmptyInput("no training frames".into()));
        }
        Ok(TrainMatrix {
            data,
            labels,
            seq_ranges,
            dim: dim.unwrap_or(0),
            num_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn seq_ranges(&self) -> &[(usize, usize)] {
        &self.seq_ranges
    }

    #[inline]
    pub fn value(&self, frame: usize, feature: usize) -> f64 {
        self.data[frame * self.dim + feature]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.dim..(frame + 1) * self.dim]
    }
}

// ── Tree structure ───────────────────────────────────────────────────────

/// One axis-aligned split: go left iff `x[feature_index] ≤ threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub feature_index: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Internal {
        split: SplitParams,
        /// Indices into the node array.
        left: usize,
        right: usize,
    },
    Leaf {
        leaf_id: usize,
    },
}

/// A node of the finished tree. `id` is the level-order identity from
/// growth (children of `i` are `2i+1` and `2i+2`); the node array itself
/// is stored breadth-first.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub kind: NodeKind,
}

/// A grown tree: breadth-first node array plus the frame dimensionality
/// it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTree {
    nodes: Vec<TreeNode>,
    dim: usize,
    num_leaves: usize,
}

impl TransitionTree {
    pub(crate) fn from_parts(nodes: Vec<TreeNode>, dim: usize, num_leaves: usize) -> Self {
        TransitionTree {
            nodes,
            dim,
            num_leaves,
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_leaves(&self) -> usize {
        self.num_leaves
    }

    /// Number each internal split contributes to depth (root-only tree: 0).
    pub fn depth(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| {
                // depth of a level-order id is ⌊log2(id+1)⌋
                (64 - (n.id + 1).leading_zeros() - 1) as usize
            })
            .max()
            .unwrap_or(0)
    }

    /// Descends from the root to a leaf; `x` must have the trained
    /// dimensionality. Equal-to-threshold goes left.
    pub fn route(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut idx = 0;
        loop {
            match &self.nodes[idx].kind {
                NodeKind::Leaf { leaf_id } => return Ok(*leaf_id),
                NodeKind::Internal { split, left, right } => {
                    idx = if x[split.feature_index] <= split.threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

// ── Leaf statistics ──────────────────────────────────────────────────────

/// Transition distribution stored for one (previous leaf, current leaf)
/// pair: one row per previous label, each a distribution over the current
/// label, plus the training pair count backing it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransEntry {
    pub rows: Vec<Vec<f64>>,
    pub support: u32,
}

/// Per-leaf distributions gathered after growth: a class distribution per
/// leaf, and a conditional label-transition matrix per sufficiently
/// supported leaf pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafTables {
    class_dist: Vec<Vec<f64>>,
    trans: BTreeMap<(u32, u32), TransEntry>,
}

impl LeafTables {
    pub fn num_leaves(&self) -> usize {
        self.class_dist.len()
    }

    pub fn class_dist(&self, leaf: usize) -> &[f64] {
        &self.class_dist[leaf]
    }

    pub fn trans_entry(&self, prev_leaf: u32, cur_leaf: u32) -> Option<&TransEntry> {
        self.trans.get(&(prev_leaf, cur_leaf))
    }

    pub fn trans_entries(&self) -> impl Iterator<Item = (&(u32, u32), &TransEntry)> {
        self.trans.iter()
    }

    pub(crate) fn from_parts(
        class_dist: Vec<Vec<f64>>,
        trans: BTreeMap<(u32, u32), TransEntry>,
    ) -> Self {
        LeafTables { class_dist, trans }
    }
}

// ── Training trace ───────────────────────────────────────────────────────

/// One accepted coordinate-descent update. `before`/`after` are the
/// node's local transition objective around the update, both computed by
/// the same candidate-evaluation path, so `after < before` holds exactly.
/// Every term the update does not touch is unchanged, so the level-wide
/// objective decreases by exactly `before − after`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptRecord {
    pub level: usize,
    pub sweep: usize,
    pub node: NodeId,
    pub before: f64,
    pub after: f64,
}

/// Level-wide transition objective at the start and end of one level's
/// descent, summed over every tracked node pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelObjective {
    pub level: usize,
    pub initial: f64,
    pub final_value: f64,
}

/// What training did: every accepted update and per-level objectives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub accepts: Vec<AcceptRecord>,
    pub levels: Vec<LevelObjective>,
}

/// Result of growing one tree: the structure, the final training-frame →
/// leaf assignment, and the optimization trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GrownTree {
    pub tree: TransitionTree,
    pub leaf_of: Vec<u32>,
    pub trace: TrainTrace,
}

// ── Candidate sampling and classification optimization ───────────────────

/// Draws the candidate splits for one node: `n_candidate_features`
/// distinct features, then per feature `n_candidate_thresholds` thresholds
/// uniform over that feature's observed range at the node. A constant
/// feature yields thresholds equal to the constant, which route every
/// sample left.
pub fn sample_candidates(
    rng: &mut impl Rng,
    matrix: &TrainMatrix,
    samples: &[usize],
    cfg: &TreeTrainConfig,
) -> Result<Vec<SplitParams>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples at node".into()));
    }
    let n_features = cfg.n_candidate_features.min(matrix.dim());
    let features = rand::seq::index::sample(rng, matrix.dim(), n_features);
    let mut out = Vec::with_capacity(n_features * cfg.n_candidate_thresholds);
    for feature_index in features {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &t in samples {
            let v = matrix.value(t, feature_index);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let dist = Uniform::new_inclusive(lo, hi);
        for _ in 0..cfg.n_candidate_thresholds {
            out.push(SplitParams {
                feature_index,
                threshold: dist.sample(rng),
            });
        }
    }
    Ok(out)
}

/// Greedy split choice: samples candidates and returns the one minimizing
/// the children's count-weighted label entropy, first seen winning ties.
pub fn optimize_classification_node(
    matrix: &TrainMatrix,
    samples: &[usize],
    cfg: &TreeTrainConfig,
    rng: &mut impl Rng,
) -> Result<(SplitParams, f64)> {
    if samples.len() < cfg.min_samples_split {
        return Err(Error::Validation(format!(
            "node with {} samples is below min_samples_split {}",
            samples.len(),
            cfg.min_samples_split
        )));
    }
    let candidates = sample_candidates(rng, matrix, samples, cfg)?;
    let mut best: Option<(SplitParams, f64)> = None;
    for cand in candidates {
        let mut left = LabelHistogram::new(matrix.num_labels());
        let mut right = LabelHistogram::new(matrix.num_labels());
        for &t in samples {
            if matrix.value(t, cand.feature_index) <= cand.threshold {
                left.add(matrix.labels()[t]);
            } else {
                right.add(matrix.labels()[t]);
            }
        }
        let obj = classification_objective(&left, &right);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((cand, obj));
        }
    }
    best.ok_or_else(|| Error::Internal("no candidates sampled".into()))
}

// ── Level optimization ───────────────────────────────────────────────────

/// A frontier node: its level-order id and the training frames at it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierNode {
    pub id: NodeId,
    pub samples: Vec<usize>,
}

/// In-level transition bookkeeping: the live table over the current
/// assignment plus the indexing needed to re-score one node quickly.
struct LevelState {
    table: TransitionSetTable,
    /// Tracked bucket of every frame: settled-leaf id, or the child the
    /// owner's current split routes it to.
    bucket_of: Vec<NodeId>,
    /// Owning transition node per frame (u64::MAX when the frame belongs
    /// to a settled leaf or a frozen classification node).
    owner: Vec<NodeId>,
    /// Frame's position within its owner's sample list.
    pos_in_owner: Vec<u32>,
    /// All d-distant in-sequence frame pairs as (earlier, later).
    pairs: Vec<(u32, u32)>,
    /// For each transition node, indices into `pairs` with ≥ 1 endpoint
    /// owned by it (each pair listed once).
    pairs_touching: BTreeMap<NodeId, Vec<u32>>,
}

impl LevelState {
    /// Local objective of `node` under a hypothetical split, counting
    /// every transition set the re-split could change, each exactly once:
    /// sets with at least one endpoint among the node's children, against
    /// anything tracked — sibling child, peer child, or settled bucket.
    fn eval_candidate(
        &self,
        matrix: &TrainMatrix,
        node: NodeId,
        samples: &[usize],
        params: &SplitParams,
        side: &mut Vec<bool>,
    ) -> f64 {
        side.clear();
        side.extend(
            samples
                .iter()
                .map(|&t| matrix.value(t, params.feature_index) <= params.threshold),
        );
        let (left, right) = child_ids(node);
        let resolve = |t: usize| -> NodeId {
            if self.owner[t] == node {
                if side[self.pos_in_owner[t] as usize] {
                    left
                } else {
                    right
                }
            } else {
                self.bucket_of[t]
            }
        };
        let mut touched: BTreeMap<(NodeId, NodeId), TransitionHistogram> = BTreeMap::new();
        for &pi in &self.pairs_touching[&node] {
            let (tp, tc) = self.pairs[pi as usize];
            let (tp, tc) = (tp as usize, tc as usize);
            touched
                .entry((resolve(tp), resolve(tc)))
                .or_insert_with(|| TransitionHistogram::new(matrix.num_labels()))
                .add(matrix.labels()[tp], matrix.labels()[tc]);
        }
        touched.values().map(|h| weighted_entropy(h.counts())).sum()
    }

    /// Re-routes `node`'s samples under an accepted split and moves the
    /// affected pairs in the live table.
    fn apply_accept(
        &mut self,
        matrix: &TrainMatrix,
        node: NodeId,
        samples: &[usize],
        side: &[bool],
    ) {
        let (left, right) = child_ids(node);
        let pair_indices = &self.pairs_touching[&node];
        for &pi in pair_indices {
            let (tp, tc) = self.pairs[pi as usize];
            let (tp, tc) = (tp as usize, tc as usize);
            self.table.decrement(
                self.bucket_of[tp],
                self.bucket_of[tc],
                matrix.labels()[tp],
                matrix.labels()[tc],
            );
        }
        for (pos, &t) in samples.iter().enumerate() {
            self.bucket_of[t] = if side[pos] { left } else { right };
        }
        for &pi in pair_indices {
            let (tp, tc) = self.pairs[pi as usize];
            let (tp, tc) = (tp as usize, tc as usize);
            self.table.increment(
                self.bucket_of[tp],
                self.bucket_of[tc],
                matrix.labels()[tp],
                matrix.labels()[tc],
            );
        }
    }

    /// Level-wide objective over every tracked node pair.
    fn canonical_objective(&self) -> f64 {
        self.table
            .entries()
            .map(|(_, h)| weighted_entropy(h.counts()))
            .sum()
    }
}

/// Optimizes one depth level. Splittable nodes (given in ascending id
/// order) each get a criterion by coin flip; classification nodes are
/// greedily optimized and frozen; transition nodes start from their own
/// greedy choice and are refined by coordinate descent, re-sampling
/// candidates each sweep and accepting a change only when it strictly
/// decreases the node's local transition objective. Settled leaves take
/// part as fixed single buckets. Returns the chosen split per splittable
/// node.
pub fn learn_level(
    matrix: &TrainMatrix,
    splittable: &[FrontierNode],
    settled: &[FrontierNode],
    cfg: &TreeTrainConfig,
    rng: &mut impl Rng,
    level: usize,
    trace: &mut TrainTrace,
) -> Result<BTreeMap<NodeId, SplitParams>> {
    debug_assert!(splittable.windows(2).all(|w| w[0].id < w[1].id));

    // criterion flips, in node-id order
    let is_transition: Vec<bool> = splittable
        .iter()
        .map(|_| rng.gen::<f64>() < cfg.transition_node_prob)
        .collect();

    // greedy optimization: classification nodes frozen, transition nodes
    // initialized from the same objective
    let mut splits: BTreeMap<NodeId, SplitParams> = BTreeMap::new();
    for pass_transition in [false, true] {
        for (node, &transition) in splittable.iter().zip(&is_transition) {
            if transition == pass_transition {
                let (params, _) = optimize_classification_node(matrix, &node.samples, cfg, rng)?;
                splits.insert(node.id, params);
            }
        }
    }

    let transition_nodes: Vec<&FrontierNode> = splittable
        .iter()
        .zip(&is_transition)
        .filter(|(_, &t)| t)
        .map(|(n, _)| n)
        .collect();
    if transition_nodes.is_empty() {
        return Ok(splits);
    }
    let d = cfg
        .d
        .ok_or_else(|| Error::Internal("transition node without temporal distance".into()))?;

    // current assignment of every frame to its tracked bucket
    let n = matrix.n();
    let mut bucket_of = vec![u64::MAX; n];
    let mut owner = vec![u64::MAX; n];
    let mut pos_in_owner = vec![0u32; n];
    for leaf in settled {
        for &t in &leaf.samples {
            bucket_of[t] = leaf.id;
        }
    }
    for node in splittable {
        let params = &splits[&node.id];
        let (left, right) = child_ids(node.id);
        for &t in &node.samples {
            bucket_of[t] = if matrix.value(t, params.feature_index) <= params.threshold {
                left
            } else {
                right
            };
        }
    }
    for node in &transition_nodes {
        for (pos, &t) in node.samples.iter().enumerate() {
            owner[t] = node.id;
            pos_in_owner[t] = pos as u32;
        }
    }

    let mut tracked: BTreeSet<NodeId> = settled.iter().map(|l| l.id).collect();
    for node in splittable {
        let (left, right) = child_ids(node.id);
        tracked.insert(left);
        tracked.insert(right);
    }
    let table = crate::stats::build_transition_sets(
        &bucket_of,
        matrix.labels(),
        matrix.seq_ranges(),
        matrix.num_labels(),
        d,
        &tracked,
    )?;

    let mut pairs = Vec::new();
    let mut pairs_touching: BTreeMap<NodeId, Vec<u32>> = transition_nodes
        .iter()
        .map(|n| (n.id, Vec::new()))
        .collect();
    for &(start, end) in matrix.seq_ranges() {
        for t in (start + d)..end {
            let pi = pairs.len() as u32;
            pairs.push(((t - d) as u32, t as u32));
            let (op, oc) = (owner[t - d], owner[t]);
            if op != u64::MAX {
                pairs_touching
                    .get_mut(&op)
                    .expect("owner is a transition node")
                    .push(pi);
            }
            if oc != u64::MAX && oc != op {
                pairs_touching
                    .get_mut(&oc)
                    .expect("owner is a transition node")
                    .push(pi);
            }
        }
    }

    let mut state = LevelState {
        table,
        bucket_of,
        owner,
        pos_in_owner,
        pairs,
        pairs_touching,
    };
    let initial = state.canonical_objective();

    // coordinate descent over the transition nodes
    let mut side = Vec::new();
    let mut best_side = Vec::new();
    for sweep in 0..cfg.coordinate_descent_sweeps {
        let mut changed = false;
        for node in &transition_nodes {
            let candidates = sample_candidates(rng, matrix, &node.samples, cfg)?;
            let current =
                state.eval_candidate(matrix, node.id, &node.samples, &splits[&node.id], &mut side);
            let mut best: Option<(SplitParams, f64)> = None;
            for cand in candidates {
                let obj = state.eval_candidate(matrix, node.id, &node.samples, &cand, &mut side);
                if obj < best.as_ref().map_or(current, |(_, b)| *b) {
                    best = Some((cand, obj));
                    std::mem::swap(&mut best_side, &mut side);
                }
            }
            if let Some((cand, obj)) = best {
                // the invariant the whole level optimization rests on: an
                // accepted update strictly decreases the objective it can
                // influence, and every other term is untouched
                assert!(
                    obj < current,
                    "accepted transition update must strictly decrease the local objective \
                     (node {}, sweep {sweep}: {obj} vs {current})",
                    node.id
                );
                state.apply_accept(matrix, node.id, &node.samples, &best_side);
                splits.insert(node.id, cand);
                trace.accepts.push(AcceptRecord {
                    level,
                    sweep,
                    node: node.id,
                    before: current,
                    after: obj,
                });
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    trace.levels.push(LevelObjective {
        level,
        initial,
        final_value: state.canonical_objective(),
    });
    Ok(splits)
}

// ── Whole-tree growth ────────────────────────────────────────────────────

fn is_splittable(matrix: &TrainMatrix, node: &FrontierNode, cfg: &TreeTrainConfig) -> bool {
    if node.samples.len() < cfg.min_samples_split {
        return false;
    }
    let first = matrix.labels()[node.samples[0]];
    node.samples.iter().any(|&t| matrix.labels()[t] != first)
}

/// Grows a full tree level-by-level until max depth or no splittable
/// frontier remains. Nodes become leaves when pure, too small, at max
/// depth, or when their chosen split fails to separate their samples.
pub fn grow_tree(
    matrix: &TrainMatrix,
    cfg: &TreeTrainConfig,
    rng: &mut impl Rng,
) -> Result<GrownTree> {
    cfg.validate()?;
    if matrix.n() == 0 {
        return Err(Error::EmptyInput("empty training matrix".into()));
    }
    let mut trace = TrainTrace::default();
    let mut splits: BTreeMap<NodeId, SplitParams> = BTreeMap::new();
    let mut settled: Vec<FrontierNode> = Vec::new();
    let mut frontier = vec![FrontierNode {
        id: 0,
        samples: (0..matrix.n()).collect(),
    }];

    for level in 0..cfg.max_depth {
        let (splittable, settling): (Vec<_>, Vec<_>) = frontier
            .into_iter()
            .partition(|node| is_splittable(matrix, node, cfg));
        settled.extend(settling);
        if splittable.is_empty() {
            frontier = Vec::new();
            break;
        }
        settled.sort_by_key(|n| n.id);

        let level_splits = learn_level(matrix, &splittable, &settled, cfg, rng, level, &mut trace)?;

        let mut next = Vec::new();
        for node in splittable {
            let params = level_splits[&node.id];
            let (left_id, right_id) = child_ids(node.id);
            let (left, right): (Vec<usize>, Vec<usize>) = node
                .samples
                .iter()
                .partition(|&&t| matrix.value(t, params.feature_index) <= params.threshold);
            if left.is_empty() || right.is_empty() {
                // the split separates nothing — keep the node as a leaf
                settled.push(node);
                continue;
            }
            splits.insert(node.id, params);
            next.push(FrontierNode {
                id: left_id,
                samples: left,
            });
            next.push(FrontierNode {
                id: right_id,
                samples: right,
            });
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    settled.extend(frontier);
    settled.sort_by_key(|n| n.id);

    let (tree, leaf_of) = bake(&splits, &settled, matrix)?;
    Ok(GrownTree {
        tree,
        leaf_of,
        trace,
    })
}

/// Packs the level-order split map and settled leaves into the
/// breadth-first node array and the frame → leaf assignment.
fn bake(
    splits: &BTreeMap<NodeId, SplitParams>,
    settled: &[FrontierNode],
    matrix: &TrainMatrix,
) -> Result<(TransitionTree, Vec<u32>)> {
    let mut slot: BTreeMap<NodeId, usize> = BTreeMap::new();
    for &id in splits.keys() {
        slot.insert(id, 0);
    }
    for leaf in settled {
        slot.insert(leaf.id, 0);
    }
    for (i, (_, s)) in slot.iter_mut().enumerate() {
        *s = i;
    }

    let leaf_ids: BTreeSet<NodeId> = settled.iter().map(|l| l.id).collect();
    let mut nodes = Vec::with_capacity(slot.len());
    let mut leaf_no: BTreeMap<NodeId, usize> = BTreeMap::new();
    for &id in slot.keys() {
        let kind = if let Some(&params) = splits.get(&id) {
            let (l, r) = child_ids(id);
            let left = *slot
                .get(&l)
                .ok_or_else(|| Error::Internal(format!("split node {id} missing left child")))?;
            let right = *slot
                .get(&r)
                .ok_or_else(|| Error::Internal(format!("split node {id} missing right child")))?;
            NodeKind::Internal {
                split: params,
                left,
                right,
            }
        } else {
            debug_assert!(leaf_ids.contains(&id));
            let leaf_id = leaf_no.len();
            leaf_no.insert(id, leaf_id);
            NodeKind::Leaf { leaf_id }
        };
        nodes.push(TreeNode { id, kind });
    }

    let mut leaf_of = vec![u32::MAX; matrix.n()];
    for leaf in settled {
        let number = leaf_no[&leaf.id] as u32;
        for &t in &leaf.samples {
            debug_assert_eq!(leaf_of[t], u32::MAX, "frame {t} assigned to two leaves");
            leaf_of[t] = number;
        }
    }
    if leaf_of.contains(&u32::MAX) {
        return Err(Error::Internal("frame not assigned to any leaf".into()));
    }

    let num_leaves = leaf_no.len();
    Ok((
        TransitionTree {
            nodes,
            dim: matrix.dim(),
            num_leaves,
        },
        leaf_of,
    ))
}

// ── Leaf finalization ────────────────────────────────────────────────────

fn smoothed(counts: &[u32], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().map(|&c| c as f64).sum::<f64>() + alpha * counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + alpha) / total).collect()
}

/// Builds the leaf distributions from the final training assignment:
/// smoothed class distributions per leaf, and per (previous leaf, current
/// leaf) pair with enough training pairs a smoothed label-transition
/// matrix. Transition rows whose previous label never occurred at that
/// pair fall back to the current leaf's class distribution.
pub fn finalize_leaves(
    grown: &GrownTree,
    matrix: &TrainMatrix,
    cfg: &TreeTrainConfig,
) -> Result<LeafTables> {
    let num_labels = matrix.num_labels();
    let num_leaves = grown.tree.num_leaves();
    if grown.leaf_of.len() != matrix.n() {
        return Err(Error::Internal(format!(
            "leaf assignment covers {} frames, matrix has {}",
            grown.leaf_of.len(),
            matrix.n()
        )));
    }

    let mut counts = vec![vec![0u32; num_labels]; num_leaves];
    for (t, &leaf) in grown.leaf_of.iter().enumerate() {
        counts[leaf as usize][matrix.labels()[t]] += 1;
    }
    let class_dist: Vec<Vec<f64>> = counts
        .iter()
        .map(|c| smoothed(c, cfg.laplace_alpha))
        .collect();

    let mut trans = BTreeMap::new();
    if let Some(d) = cfg.d {
        let mut pair_counts: BTreeMap<(u32, u32), TransitionHistogram> = BTreeMap::new();
        for &(start, end) in matrix.seq_ranges() {
            for t in (start + d)..end {
                pair_counts
                    .entry((grown.leaf_of[t - d], grown.leaf_of[t]))
                    .or_insert_with(|| TransitionHistogram::new(num_labels))
                    .add(matrix.labels()[t - d], matrix.labels()[t]);
            }
        }
        for ((prev_leaf, cur_leaf), hist) in pair_counts {
            if (hist.total() as usize) < cfg.min_transition_support {
                continue;
            }
            let rows: Vec<Vec<f64>> = (0..num_labels)
                .map(|prev| {
                    let row: Vec<u32> = (0..num_labels).map(|cur| hist.get(prev, cur)).collect();
                    if row.iter().all(|&c| c == 0) {
                        class_dist[cur_leaf as usize].clone()
                    } else {
                        smoothed(&row, cfg.laplace_alpha)
                    }
                })
                .collect();
            trans.insert(
                (prev_leaf, cur_leaf),
                TransEntry {
                    rows,
                    support: hist.total(),
                },
            );
        }
    }

    Ok(LeafTables::from_parts(class_dist, trans))
}

// ── Tests ────────────────────────────────────────────────────────────────
