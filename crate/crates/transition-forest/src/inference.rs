//! Frame-by-frame prediction and whole-sequence recognition.
//!
//! A frame's posterior is the product of two factors, renormalized: the
//! *classification factor* averages the class distribution of the leaf
//! the frame reaches in every tree, and the *transition factor* averages,
//! over each temporal distance d with a frame d steps back in the
//! context, the leaf-pair transition distributions of the trees trained
//! at that d, conditioned on the label predicted back then. At a
//! sequence start, before any context exists, the classification factor
//! alone is the posterior. Prediction is causal: nothing after the
//! current frame is consulted, so the same code serves batch recognition
//! and live streams.

use std::collections::VecDeque;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::forest::TransitionForest;

/// Posterior over labels for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePosterior {
    pub probs: Vec<f64>,
    pub argmax_label: Label,
    pub time_index: usize,
}

/// What one processed frame leaves behind for later frames: the leaf it
/// reached in every tree, the label it was assigned, and its posterior
/// (used when transitions are conditioned softly).
#[derive(Debug, Clone)]
struct FrameRecord {
    leaves: Vec<u32>,
    label: Label,
    probs: Vec<f64>,
}

/// Rolling window of the last k frame records for one stream. One
/// context per stream; distinct streams share the forest freely.
#[derive(Debug, Clone)]
pub struct PredictionContext {
    records: VecDeque<FrameRecord>,
    k: usize,
    num_trees: usize,
    soft: bool,
    next_t: usize,
}

impl PredictionContext {
    /// A fresh context for one stream. `soft` conditions transitions on
    /// the full stored posterior instead of its argmax label.
    pub fn new(forest: &TransitionForest, soft: bool) -> Self {
        PredictionContext {
            records: VecDeque::with_capacity(forest.temporal_order() + 1),
            k: forest.temporal_order(),
            num_trees: forest.trees().len(),
            soft,
            next_t: 0,
        }
    }

    /// Forget everything; the next frame is a sequence start.
    pub fn reset(&mut self) {
        self.records.clear();
        self.next_t = 0;
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The record `d` frames back, if the stream is that long already.
    fn back(&self, d: usize) -> Option<&FrameRecord> {
        self.records.len().checked_sub(d).map(|i| &self.records[i])
    }

    fn push(&mut self, record: FrameRecord) {
        if self.k > 0 {
            self.records.push_back(record);
            if self.records.len() > self.k {
                self.records.pop_front();
            }
        }
        self.next_t += 1;
    }
}

fn argmax_lowest(probs: &[f64]) -> Label {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn normalize_in_place(probs: &mut [f64]) -> bool {
    let sum: f64 = probs.iter().sum();
    if sum > 0.0 {
        for p in probs.iter_mut() {
            *p /= sum;
        }
        true
    } else {
        false
    }
}

/// Mean, over the trees trained at distance `d`, of the stored
/// distribution over the current label given the previous one: each tree
/// looks up its (previous leaf, current leaf) transition entry and takes
/// the `prev_label` row, falling back to the current leaf's class
/// distribution when no entry is stored. Leaf slices are index-aligned
/// with the forest's tree list.
pub fn transition_probability(
    forest: &TransitionForest,
    d: usize,
    cur_leaves: &[u32],
    prev_leaves: &[u32],
    prev_label: Label,
) -> Result<Vec<f64>> {
    let k = forest.temporal_order();
    if d < 1 || d > k {
        return Err(Error::Validation(format!(
            "temporal distance {d} outside this forest's range 1..={k}"
        )));
    }
    if cur_leaves.len() != forest.trees().len() || prev_leaves.len() != forest.trees().len() {
        return Err(Error::Validation(
            "leaf slice not aligned with the tree list".into(),
        ));
    }
    if prev_label >= forest.num_labels() {
        return Err(Error::Validation(format!(
            "previous label {prev_label} outside vocabulary of {}",
            forest.num_labels()
        )));
    }
    let mut acc = vec![0.0; forest.num_labels()];
    let mut count = 0usize;
    for (i, tree) in forest.trees().iter().enumerate() {
        if tree.d != Some(d) {
            continue;
        }
        let row = match tree.tables.trans_entry(prev_leaves[i], cur_leaves[i]) {
            Some(entry) => &entry.rows[prev_label],
            None => tree.tables.class_dist(cur_leaves[i] as usize),
        };
        for (a, &p) in acc.iter_mut().zip(row) {
            *a += p;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Internal(format!(
            "no tree trained at temporal distance {d}"
        )));
    }
    for a in &mut acc {
        *a /= count as f64;
    }
    Ok(acc)
}

/// The transition factor for one distance under soft conditioning: per
/// tree, the entry's rows are marginalized over the stored previous
/// posterior (a missing entry contributes the class distribution, which
/// no longer depends on the previous label); trees are then averaged.
fn soft_transition_factor(
    forest: &TransitionForest,
    d: usize,
    cur_leaves: &[u32],
    prev: &FrameRecord,
) -> Vec<f64> {
    let num_labels = forest.num_labels();
    let mut acc = vec![0.0; num_labels];
    let mut count = 0usize;
    for (i, tree) in forest.trees().iter().enumerate() {
        if tree.d != Some(d) {
            continue;
        }
        match tree.tables.trans_entry(prev.leaves[i], cur_leaves[i]) {
            Some(entry) => {
                for (y_prev, row) in entry.rows.iter().enumerate() {
                    let w = prev.probs[y_prev];
                    for (a, &p) in acc.iter_mut().zip(row) {
                        *a += w * p;
                    }
                }
            }
            None => {
                for (a, &p) in acc
                    .iter_mut()
                    .zip(tree.tables.class_dist(cur_leaves[i] as usize))
                {
                    *a += p;
                }
            }
        }
        count += 1;
    }
    debug_assert!(count > 0);
    for a in &mut acc {
        *a /= count as f64;
    }
    acc
}

/// Computes one frame's posterior and absorbs the frame into the
/// context. See the module docs for the factor structure.
pub fn predict_frame(
    forest: &TransitionForest,
    x: &[f64],
    ctx: &mut PredictionContext,
) -> Result<FramePosterior> {
    if ctx.num_trees != forest.trees().len() {
        return Err(Error::Validation(
            "prediction context was created for a different forest".into(),
        ));
    }
    let num_labels = forest.num_labels();
    let mut leaves = Vec::with_capacity(forest.trees().len());
    let mut class_factor = vec![0.0; num_labels];
    for tree in forest.trees() {
        let leaf = tree.tree.route(x)?;
        leaves.push(leaf as u32);
        for (a, &p) in class_factor.iter_mut().zip(tree.tables.class_dist(leaf)) {
            *a += p;
        }
    }
    for a in &mut class_factor {
        *a /= forest.trees().len() as f64;
    }

    let mut trans_factor = vec![0.0; num_labels];
    let mut available = 0usize;
    for d in 1..=forest.temporal_order() {
        let Some(prev) = ctx.back(d) else { continue };
        let factor = if ctx.soft {
            soft_transition_factor(forest, d, &leaves, prev)
        } else {
            transition_probability(forest, d, &leaves, &prev.leaves, prev.label)?
        };
        for (a, p) in trans_factor.iter_mut().zip(factor) {
            *a += p;
        }
        available += 1;
    }

    let mut probs = if available > 0 {
        let mut p: Vec<f64> = class_factor
            .iter()
            .zip(&trans_factor)
            .map(|(&c, &t)| c * t / available as f64)
            .collect();
        if !normalize_in_place(&mut p) {
            // all-zero product cannot happen with smoothed tables; keep
            // the static factor rather than emit garbage if it ever does
            p = class_factor.clone();
        }
        p
    } else {
        class_factor
    };
    if !normalize_in_place(&mut probs) {
        return Err(Error::Internal("posterior sums to zero".into()));
    }

    let argmax_label = argmax_lowest(&probs);
    let time_index = ctx.next_t;
    ctx.push(FrameRecord {
        leaves,
        label: argmax_label,
        probs: probs.clone(),
    });
    Ok(FramePosterior {
        probs,
        argmax_label,
        time_index,
    })
}

/// Labels a whole sequence: runs the frames through a fresh context and
/// takes the argmax of the mean posterior, lowest label id on ties.
pub fn classify_sequence(
    forest: &TransitionForest,
    seq: &FeatureSequence,
    soft: bool,
) -> Result<(Label, Vec<FramePosterior>)> {
    if seq.frames.is_empty() {
        return Err(Error::EmptyInput(format!(
            "sequence '{}' has no frames",
            seq.id
        )));
    }
    let mut ctx = PredictionContext::new(forest, soft);
    let mut posteriors = Vec::with_capacity(seq.frames.len());
    for frame in &seq.frames {
        posteriors.push(predict_frame(forest, &frame.vector, &mut ctx)?);
    }
    let mut mean = vec![0.0; forest.num_labels()];
    for p in &posteriors {
        for (m, &v) in mean.iter_mut().zip(&p.probs) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= posteriors.len() as f64;
    }
    Ok((argmax_lowest(&mean), posteriors))
}
