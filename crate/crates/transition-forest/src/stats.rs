//! Histograms, entropies, and transition-set bookkeeping behind every
//! split decision.
//!
//! A *transition set* collects the d-distant in-sequence frame pairs whose
//! endpoints currently sit at a given ordered pair of tree nodes, reduced
//! to a histogram over their (earlier label, later label) transitions.
//! Classification splits score child label histograms; transition splits
//! score these pair histograms. Both use count-weighted Shannon entropy:
//! the weight is the set size itself, so an objective is Σ |T|·H(T) over
//! whichever sets the split touches.

use std::collections::BTreeMap;

use crate::data::Label;
use crate::error::{Error, Result};

/// Node identity during level-wise growth: the root is 0 and the children
/// of `i` are `2i+1` and `2i+2`, so ids order themselves breadth-first.
pub type NodeId = u64;

/// The two child ids a split at `parent` creates.
pub fn child_ids(parent: NodeId) -> (NodeId, NodeId) {
    (2 * parent + 1, 2 * parent + 2)
}

/// Sample counts per class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelHistogram {
    counts: Vec<u32>,
    total: u32,
}

impl LabelHistogram {
    pub fn new(num_labels: usize) -> Self {
        LabelHistogram {
            counts: vec![0; num_labels],
            total: 0,
        }
    }

    pub fn from_labels(labels: impl IntoIterator<Item = Label>, num_labels: usize) -> Self {
        let mut h = Self::new(num_labels);
        for l in labels {
            h.add(l);
        }
        h
    }

    pub fn add(&mut self, label: Label) {
        self.counts[label] += 1;
        self.total += 1;
    }

    pub fn remove(&mut self, label: Label) {
        debug_assert!(self.counts[label] > 0, "count underflow for label {label}");
        self.counts[label] -= 1;
        self.total -= 1;
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    /// True when at most one label is present.
    pub fn is_pure(&self) -> bool {
        self.counts.iter().filter(|&&c| c > 0).count() <= 1
    }

    /// Index of the most frequent label (smallest id on ties).
    pub fn argmax(&self) -> Label {
        self.counts
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Counts of (earlier label, later label) pairs in one transition set,
/// stored dense as `prev · |Y| + cur`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionHistogram {
    counts: Vec<u32>,
    total: u32,
    num_labels: usize,
}

impl TransitionHistogram {
    pub fn new(num_labels: usize) -> Self {
        TransitionHistogram {
            counts: vec![0; num_labels * num_labels],
            total: 0,
            num_labels,
        }
    }

    fn key(&self, prev: Label, cur: Label) -> usize {
        debug_assert!(prev < self.num_labels && cur < self.num_labels);
        prev * self.num_labels + cur
    }

    pub fn add(&mut self, prev: Label, cur: Label) {
        let k = self.key(prev, cur);
        self.counts[k] += 1;
        self.total += 1;
    }

    pub fn remove(&mut self, prev: Label, cur: Label) {
        let k = self.key(prev, cur);
        debug_assert!(
            self.counts[k] > 0,
            "count underflow for transition {prev}→{cur}"
        );
        self.counts[k] -= 1;
        self.total -= 1;
    }

    pub fn get(&self, prev: Label, cur: Label) -> u32 {
        self.counts[self.key(prev, cur)]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }
}

/// Shannon entropy in bits of the distribution a count slice induces:
/// −Σ p·log2 p over nonzero counts; 0 for an empty slice or all zeros.
pub fn shannon_entropy(counts: &[u32]) -> f64 {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.log2();
        }
    }
    h
}

/// Count-weighted entropy `|h|·H(h)` — the unit every objective sums.
pub fn weighted_entropy(counts: &[u32]) -> f64 {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    total as f64 * shannon_entropy(counts)
}

/// Classification split score: `|L|·H(L) + |R|·H(R)` over the child label
/// histograms. Lower is better; 0 means both children are pure.
pub fn classification_objective(left: &LabelHistogram, right: &LabelHistogram) -> f64 {
    weighted_entropy(left.counts()) + weighted_entropy(right.counts())
}

/// All nonempty transition sets for one temporal distance, keyed by the
/// (source node, destination node) the pair endpoints reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionSetTable {
    d: usize,
    num_labels: usize,
    entries: BTreeMap<(NodeId, NodeId), TransitionHistogram>,
}

impl TransitionSetTable {
    pub fn new(d: usize, num_labels: usize) -> Self {
        TransitionSetTable {
            d,
            num_labels,
            entries: BTreeMap::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn increment(&mut self, src: NodeId, dst: NodeId, prev: Label, cur: Label) {
        self.entries
            .entry((src, dst))
            .or_insert_with(|| TransitionHistogram::new(self.num_labels))
            .add(prev, cur);
    }

    /// Removes one pair; the entry disappears when its set empties, so
    /// iteration only ever sees live sets.
    pub fn decrement(&mut self, src: NodeId, dst: NodeId, prev: Label, cur: Label) {
        let hist = self
            .entries
            .get_mut(&(src, dst))
            .unwrap_or_else(|| panic!("decrement of absent transition set ({src}, {dst})"));
        hist.remove(prev, cur);
        if hist.total() == 0 {
            self.entries.remove(&(src, dst));
        }
    }

    pub fn entry(&self, src: NodeId, dst: NodeId) -> Option<&TransitionHistogram> {
        self.entries.get(&(src, dst))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &TransitionHistogram)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total pairs across all sets.
    pub fn total_pairs(&self) -> u64 {
        self.entries.values().map(|h| h.total() as u64).sum()
    }

    fn weighted_entropy_at(&self, src: NodeId, dst: NodeId) -> f64 {
        self.entry(src, dst)
            .map_or(0.0, |h| weighted_entropy(h.counts()))
    }
}

/// Builds the transition-set table for one temporal distance from a frame
/// → node assignment. `assignment` and `labels` are indexed by flattened
/// frame position; `seq_ranges` gives each sequence's half-open slice of
/// that flat order, and pairs never cross those boundaries.
pub fn build_transition_sets(
    assignment: &[NodeId],
    labels: &[Label],
    seq_ranges: &[(usize, usize)],
    num_labels: usize,
    d: usize,
    tracked_nodes: &std::collections::BTreeSet<NodeId>,
) -> Result<TransitionSetTable> {
    if d == 0 {
        return Err(Error::Validation("temporal distance must be ≥ 1".into()));
    }
    if assignment.len() != labels.len() {
        return Err(Error::Internal(format!(
            "assignment covers {} frames, labels {}",
            assignment.len(),
            labels.len()
        )));
    }
    let mut table = TransitionSetTable::new(d, num_labels);
    let mut expected_pairs = 0u64;
    for &(start, end) in seq_ranges {
        for (t, &node) in assignment.iter().enumerate().take(end).skip(start) {
            if !tracked_nodes.contains(&node) {
                return Err(Error::Internal(format!(
                    "frame {t} assigned to untracked node {node}"
                )));
            }
        }
        expected_pairs += (end - start).saturating_sub(d) as u64;
        for t in (start + d)..end {
            table.increment(assignment[t - d], assignment[t], labels[t - d], labels[t]);
        }
    }
    assert_eq!(
        table.total_pairs(),
        expected_pairs,
        "transition sets must partition the d-distant pairs"
    );
    Ok(table)
}

/// Split score of a transition node: Σ |T|·H(T) over the four ordered
/// pairs of `parent`'s children. Lower is better.
pub fn transition_objective(table: &TransitionSetTable, parent: NodeId) -> f64 {
    let (c1, c2) = child_ids(parent);
    let mut sum = 0.0;
    for src in [c1, c2] {
        for dst in [c1, c2] {
            sum += table.weighted_entropy_at(src, dst);
        }
    }
    sum
}

/// The part of the level objective that re-splitting `j` can change, with
/// every other frontier node's split held fixed: Σ |T|·H(T) over the sets
/// between `j`'s own children, from `j`'s children to each peer's
/// children, and from each peer's children back to `j`'s children. Sets
/// strictly between peers drop out — they are unaffected by `j`'s split.
pub fn local_transition_objective(
    table: &TransitionSetTable,
    j: NodeId,
    peers: &[NodeId],
) -> Result<f64> {
    if peers.contains(&j) {
        return Err(Error::Validation(format!(
            "node {j} cannot be its own peer"
        )));
    }
    let (a, b) = child_ids(j);
    let mut sum = transition_objective(table, j);
    for &peer in peers {
        let (p, q) = child_ids(peer);
        for own in [a, b] {
            for other in [p, q] {
                sum += table.weighted_entropy_at(own, other);
                sum += table.weighted_entropy_at(other, own);
            }
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    #[test]
    fn entropy_basic_values() {
        assert_eq!(shannon_entropy(&[1, 1]), 1.0);
        assert_eq!(shannon_entropy(&[4]), 0.0);
        assert_eq!(shannon_entropy(&[]), 0.0);
        assert_eq!(shannon_entropy(&[0, 0]), 0.0);
        // {1, 1, 2}: −(¼·log2 ¼)·2 − ½·log2 ½ = 1.5
        assert!((shannon_entropy(&[1, 1, 2]) - 1.5).abs() <= 1e-12);
    }

    #[test]
    fn classification_objective_values() {
        let h = |labels: &[usize]| LabelHistogram::from_labels(labels.iter().copied(), 2);
        // perfect split of {a:2, b:2}
        assert_eq!(classification_objective(&h(&[0, 0]), &h(&[1, 1])), 0.0);
        // unhelpful split: both children uniform, 2·1 + 2·1
        assert_eq!(classification_objective(&h(&[0, 1]), &h(&[0, 1])), 4.0);
        // empty left child contributes nothing
        let right = h(&[0, 0, 1, 1]);
        assert_eq!(
            classification_objective(&h(&[]), &right),
            weighted_entropy(right.counts())
        );
    }

    #[test]
    fn label_histogram_argmax_prefers_smallest_on_ties() {
        let h = LabelHistogram::from_labels([2, 1, 1, 2, 0], 3);
        assert_eq!(h.argmax(), 1);
        let h = LabelHistogram::from_labels([0], 3);
        assert_eq!(h.argmax(), 0);
    }

    /// Two sibling nodes, a crouching class and a kicking class, temporal
    /// distance 1. One sequence sinks 2→2→1→1 while crouching, the other
    /// jumps 2→1 while kicking: the self-sets each hold one transition,
    /// the 2→1 set holds one of each class, and the 1→2 set is empty.
    fn two_node_fixture() -> TransitionSetTable {
        let duck = 0;
        let kick = 1;
        let assignment = [2, 2, 1, 1, 2, 1];
        let labels = [duck, duck, duck, duck, kick, kick];
        let ranges = [(0, 4), (4, 6)];
        let tracked: BTreeSet<NodeId> = [1, 2].into_iter().collect();
        build_transition_sets(&assignment, &labels, &ranges, 2, 1, &tracked).unwrap()
    }

    #[test]
    fn two_node_fixture_set_sizes() {
        let table = two_node_fixture();
        assert_eq!(table.entry(1, 1).unwrap().total(), 1);
        assert_eq!(table.entry(2, 2).unwrap().total(), 1);
        let cross = table.entry(2, 1).unwrap();
        assert_eq!(cross.total(), 2);
        assert_eq!(cross.counts().iter().filter(|&&c| c > 0).count(), 2);
        assert!(table.entry(1, 2).is_none());
    }

    #[test]
    fn two_node_fixture_objective() {
        // Only the mixed 2→1 set scores: 2 pairs · 1 bit.
        let table = two_node_fixture();
        assert_eq!(transition_objective(&table, 0), 2.0);
    }

    #[test]
    fn single_sequence_single_node_pair_count() {
        let n = 9;
        let d = 3;
        let assignment = vec![0u64; n];
        let labels = vec![0usize; n];
        let tracked: BTreeSet<NodeId> = [0].into_iter().collect();
        let table = build_transition_sets(&assignment, &labels, &[(0, n)], 1, d, &tracked).unwrap();
        assert_eq!(table.entry(0, 0).unwrap().total() as usize, n - d);
    }

    #[test]
    fn untracked_frame_is_an_error() {
        let tracked: BTreeSet<NodeId> = [0].into_iter().collect();
        let res = build_transition_sets(&[0, 7], &[0, 0], &[(0, 2)], 1, 1, &tracked);
        assert!(res.is_err());
    }

    /// Independent oracle: for every ordered node pair, scan *all* frame
    /// pairs of each sequence and keep those at distance d whose endpoints
    /// sit at that node pair. Quadratic and written nothing like the
    /// production single-pass increment loop.
    fn oracle_tables(
        assignment: &[NodeId],
        labels: &[Label],
        ranges: &[(usize, usize)],
        num_labels: usize,
        d: usize,
        nodes: &[NodeId],
    ) -> BTreeMap<(NodeId, NodeId), Vec<u32>> {
        let mut out = BTreeMap::new();
        for &src in nodes {
            for &dst in nodes {
                let mut counts = vec![0u32; num_labels * num_labels];
                let mut any = false;
                for &(start, end) in ranges {
                    for t1 in start..end {
                        for t2 in start..end {
                            if t2 > t1
                                && t2 - t1 == d
                                && assignment[t1] == src
                                && assignment[t2] == dst
                            {
                                counts[labels[t1] * num_labels + labels[t2]] += 1;
                                any = true;
                            }
                        }
                    }
                }
                if any {
                    out.insert((src, dst), counts);
                }
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let nodes: Vec<NodeId> = vec![3, 4, 5, 6];
        let tracked: BTreeSet<NodeId> = nodes.iter().copied().collect();
        for trial in 0..20 {
            let num_labels = 3;
            let d = 1 + trial % 4;
            // ~100 frames in unevenly sized sequences
            let mut ranges = Vec::new();
            let mut start = 0;
            while start < 100 {
                let len = rng.gen_range(1..=13).min(100 - start);
                ranges.push((start, start + len));
                start += len;
            }
            let n = 100;
            let assignment: Vec<NodeId> = (0..n)
                .map(|_| nodes[rng.gen_range(0..nodes.len())])
                .collect();
            let labels: Vec<Label> = (0..n).map(|_| rng.gen_range(0..num_labels)).collect();

            let table =
                build_transition_sets(&assignment, &labels, &ranges, num_labels, d, &tracked)
                    .unwrap();
            let expected = oracle_tables(&assignment, &labels, &ranges, num_labels, d, &nodes);

            let got: BTreeMap<(NodeId, NodeId), Vec<u32>> = table
                .entries()
                .map(|(&k, h)| (k, h.counts().to_vec()))
                .collect();
            assert_eq!(got, expected, "trial {trial}, d={d}");
        }
    }

    #[test]
    fn local_objective_with_no_peers_is_the_node_objective() {
        let table = two_node_fixture();
        assert_eq!(
            local_transition_objective(&table, 0, &[]).unwrap(),
            transition_objective(&table, 0)
        );
    }

    #[test]
    fn local_objective_rejects_self_peer() {
        let table = two_node_fixture();
        assert!(local_transition_objective(&table, 0, &[1, 0]).is_err());
    }

    #[test]
    fn local_objective_matches_term_enumeration() {
        // Frontier parents 3, 4, 5 with children 7/8, 9/10, 11/12.
        let (j, peers) = (3u64, [4u64, 5u64]);
        let num_labels = 3;
        let mut table = TransitionSetTable::new(1, num_labels);
        // deterministic filler touching every child pair of {3,4,5} plus
        // some pairs strictly between peers (which must not score)
        let children = [7u64, 8, 9, 10, 11, 12];
        let mut c = 0usize;
        for &src in &children {
            for &dst in &children {
                for _ in 0..(c % 4) {
                    table.increment(src, dst, c % num_labels, (c / 2) % num_labels);
                    c += 1;
                }
                c += 1;
            }
        }

        // hand enumeration of the three term groups: j's children against
        // themselves, then both directions against each peer's children
        let mut expected = 0.0;
        let mut terms = 0;
        let own = [7u64, 8];
        for src in own {
            for dst in own {
                expected += table.weighted_entropy_at(src, dst);
                terms += 1;
            }
        }
        for peer_children in [[9u64, 10], [11u64, 12]] {
            for m in own {
                for n in peer_children {
                    expected += table.weighted_entropy_at(m, n);
                    terms += 1;
                }
            }
            for m in peer_children {
                for n in own {
                    expected += table.weighted_entropy_at(m, n);
                    terms += 1;
                }
            }
        }
        assert_eq!(terms, 4 + 8 + 8);

        let got = local_transition_objective(&table, j, &peers).unwrap();
        assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");

        // peer-to-peer sets do not influence j's local objective
        let mut more = table.clone();
        for _ in 0..5 {
            more.increment(9, 11, 0, 1);
            more.increment(12, 10, 2, 2);
        }
        let with_peer_noise = local_transition_objective(&more, j, &peers).unwrap();
        assert_eq!(got, with_peer_noise);
    }

    #[test]
    fn all_pure_sets_score_zero() {
        let mut table = TransitionSetTable::new(1, 2);
        for (src, dst) in [(7u64, 7u64), (7, 8), (8, 7), (8, 8)] {
            for _ in 0..3 {
                table.increment(src, dst, 0, 1);
            }
        }
        assert_eq!(transition_objective(&table, 3), 0.0);
        assert_eq!(local_transition_objective(&table, 3, &[]).unwrap(), 0.0);
    }

    #[test]
    fn decrement_drops_empty_sets() {
        let mut table = TransitionSetTable::new(1, 2);
        table.increment(1, 2, 0, 1);
        table.increment(1, 2, 1, 1);
        table.decrement(1, 2, 0, 1);
        assert_eq!(table.entry(1, 2).unwrap().total(), 1);
        table.decrement(1, 2, 1, 1);
        assert!(table.entry(1, 2).is_none());
        assert!(table.is_empty());
    }

    proptest! {
        #[test]
        fn entropy_bounded_by_log_support(counts in prop::collection::vec(0u32..50, 1..8)) {
            let h = shannon_entropy(&counts);
            let support = counts.iter().filter(|&&c| c > 0).count();
            prop_assert!(h >= 0.0);
            if support <= 1 {
                prop_assert_eq!(h, 0.0);
            } else {
                prop_assert!(h <= (support as f64).log2() + 1e-12);
                prop_assert!(h > 0.0);
            }
        }

        #[test]
        fn pair_totals_match_sequence_lengths(
            lens in prop::collection::vec(1usize..20, 1..8),
            d in 1usize..5,
        ) {
            let mut ranges = Vec::new();
            let mut start = 0;
            for len in &lens {
                ranges.push((start, start + len));
                start += len;
            }
            let n = start;
            let assignment = vec![0u64; n];
            let labels = vec![0usize; n];
            let tracked: BTreeSet<NodeId> = [0].into_iter().collect();
            let table = build_transition_sets(&assignment, &labels, &ranges, 1, d, &tracked).unwrap();
            let expected: u64 = lens.iter().map(|&l| l.saturating_sub(d) as u64).sum();
            prop_assert_eq!(table.total_pairs(), expected);
        }
    }
}
