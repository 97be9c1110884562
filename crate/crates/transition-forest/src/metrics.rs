//! Evaluation metrics for frame classification and event detection.
//!
//! Recognition is scored the usual way: overall accuracy plus a confusion
//! matrix. Detection has no single canonical scoring protocol across
//! toolkits, so this module fixes a precise one of its own and all
//! reports produced by this crate use it:
//!
//! * **Frame-level F1** per class: precision and recall over individual
//!   frames assigned to the class, harmonically combined. The overall
//!   score is the unweighted mean over non-background classes that occur
//!   in the ground truth or the predictions.
//! * **Start/End localization (SL/EL)**: predicted events are matched to
//!   ground-truth events of the same label greedily by overlap, largest
//!   overlap first. SL is the fraction of ground-truth events whose
//!   matched prediction starts within `tol_ratio` × (ground-truth event
//!   length) of the true start, boundary inclusive; EL is the same for
//!   ends. Unmatched ground-truth events count as misses. With an
//!   infinite tolerance both scores reduce to the matched-event fraction.
//!
//! Numbers computed here are comparable between runs of this crate, not
//! directly against other benchmarks' published tables.
//!
//! All functions are pure: timing information in [`DetectionReport`] is
//! supplied by the caller.

use crate::data::Label;
use crate::detect::DetectionEvent;
use crate::error::{Error, Result};

/// Accuracy and confusion counts for per-frame or per-sequence labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionReport {
    /// Correct predictions over all predictions.
    pub overall_accuracy: f64,
    /// Recall per class; 0.0 for classes absent from the ground truth.
    pub per_class_accuracy: Vec<f64>,
    /// `confusion[truth][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
}

/// Frame-level F1 and event localization scores for a detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// Frame-level F1 per class, background included at its own index.
    pub per_class_f1: Vec<f64>,
    /// Unweighted mean F1 over non-background classes present in the
    /// ground truth or the predictions.
    pub overall_f1: f64,
    /// Fraction of ground-truth events with a tolerably placed start.
    pub sl: f64,
    /// Fraction of ground-truth events with a tolerably placed end.
    pub el: f64,
    /// Wall-clock inference time reported by the caller; not a metric.
    pub inference_time_s: f64,
}

/// A labeled, inclusive frame interval — the common shape of predicted
/// and ground-truth events once scores are stripped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventSpan {
    pub label: Label,
    pub start: usize,
    pub end: usize,
}

impl EventSpan {
    pub fn new(label: Label, start: usize, end: usize) -> Self {
        EventSpan { label, start, end }
    }

    /// Number of frames covered, at least 1 for a well-formed span.
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frames shared with `other`, 0 when disjoint.
    pub fn overlap(&self, other: &EventSpan) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        (hi + 1).saturating_sub(lo)
    }
}

impl From<&DetectionEvent> for EventSpan {
    fn from(e: &DetectionEvent) -> Self {
        EventSpan {
            label: e.label,
            start: e.start_frame,
            end: e.end_frame,
        }
    }
}

/// Collapses a per-frame label stream into one span per maximal run of a
/// non-background label.
pub fn events_from_frames(frames: &[Label], background: Option<Label>) -> Vec<EventSpan> {
    let mut events = Vec::new();
    let mut open: Option<EventSpan> = None;
    for (t, &label) in frames.iter().enumerate() {
        match open {
            Some(ref mut span) if span.label == label => span.end = t,
            _ => {
                events.extend(open.take());
                if Some(label) != background {
                    open = Some(EventSpan {
                        label,
                        start: t,
                        end: t,
                    });
                }
            }
        }
    }
    events.extend(open);
    events
}

fn check_labels(what: &str, labels: &[Label], num_labels: usize) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_labels) {
        return Err(Error::Validation(format!(
            "{what} contains label {bad}, but only {num_labels} labels exist"
        )));
    }
    Ok(())
}

/// Scores predicted labels against ground truth over a shared index set
/// (frames of one stream, or one entry per sequence).
pub fn recognition_metrics(
    predictions: &[Label],
    ground_truth: &[Label],
    num_labels: usize,
) -> Result<RecognitionReport> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::Validation(format!(
            "prediction/ground-truth length mismatch: {} vs {}",
            predictions.len(),
            ground_truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    check_labels("predictions", predictions, num_labels)?;
    check_labels("ground truth", ground_truth, num_labels)?;

    let mut confusion = vec![vec![0usize; num_labels]; num_labels];
    for (&p, &t) in predictions.iter().zip(ground_truth) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..num_labels).map(|c| confusion[c][c]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                confusion[c][c] as f64 / total as f64
            }
        })
        .collect();
    Ok(RecognitionReport {
        overall_accuracy: correct as f64 / predictions.len() as f64,
        per_class_accuracy,
        confusion,
    })
}

/// Pairs predicted events with ground-truth events of the same label,
/// greedily by overlap (largest first; earlier events win ties). Returns
/// `(ground_truth_index, prediction_index)` pairs; each event appears in
/// at most one pair, and paired events always overlap.
pub fn match_events(predictions: &[EventSpan], ground_truth: &[EventSpan]) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (gi, g) in ground_truth.iter().enumerate() {
        for (pi, p) in predictions.iter().enumerate() {
            if g.label == p.label {
                let overlap = g.overlap(p);
                if overlap > 0 {
                    candidates.push((overlap, gi, pi));
                }
            }
        }
    }
    // largest overlap first; index order breaks ties deterministically
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_taken = vec![false; ground_truth.len()];
    let mut pred_taken = vec![false; predictions.len()];
    let mut pairs = Vec::new();
    for (_, gi, pi) in candidates {
        if !gt_taken[gi] && !pred_taken[pi] {
            gt_taken[gi] = true;
            pred_taken[pi] = true;
            pairs.push((gi, pi));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Scores a detection run: frame-level F1 per class plus start/end
/// localization over matched events, as described at module level.
///
/// `inference_time_s` is carried into the report untouched; pass 0.0
/// when timing is not of interest. An empty ground-truth event list makes
/// SL and EL vacuously 1.0.
#[allow(clippy::too_many_arguments)]
pub fn detection_metrics(
    pred_frames: &[Label],
    gt_frames: &[Label],
    events: &[EventSpan],
    gt_events: &[EventSpan],
    tol_ratio: f64,
    num_labels: usize,
    background: Option<Label>,
    inference_time_s: f64,
) -> Result<DetectionReport> {
    if pred_frames.len() != gt_frames.len() {
        return Err(Error::Validation(format!(
            "prediction/ground-truth length mismatch: {} vs {}",
            pred_frames.len(),
            gt_frames.len()
        )));
    }
    check_labels("predicted frames", pred_frames, num_labels)?;
    check_labels("ground-truth frames", gt_frames, num_labels)?;
    if tol_ratio.is_nan() || tol_ratio < 0.0 {
        return Err(Error::Config(format!(
            "localization tolerance must be non-negative, got {tol_ratio}"
        )));
    }

    // frame-level F1: true/false positives and false negatives per class
    let mut tp = vec![0usize; num_labels];
    let mut fp = vec![0usize; num_labels];
    let mut fnn = vec![0usize; num_labels];
    for (&p, &t) in pred_frames.iter().zip(gt_frames) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..num_labels)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fnn[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    let scored: Vec<usize> = (0..num_labels)
        .filter(|&c| Some(c) != background)
        .filter(|&c| tp[c] + fp[c] + fnn[c] > 0)
        .collect();
    let overall_f1 = if scored.is_empty() {
        0.0
    } else {
        scored.iter().map(|&c| per_class_f1[c]).sum::<f64>() / scored.len() as f64
    };

    // event localization over greedy same-label matches
    let (sl, el) = if gt_events.is_empty() {
        (1.0, 1.0)
    } else {
        let mut start_hits = 0usize;
        let mut end_hits = 0usize;
        for (gi, pi) in match_events(events, gt_events) {
            let g = &gt_events[gi];
            let p = &events[pi];
            let tol = tol_ratio * g.len() as f64;
            if (p.start.abs_diff(g.start) as f64) <= tol {
                start_hits += 1;
            }
            if (p.end.abs_diff(g.end) as f64) <= tol {
                end_hits += 1;
            }
        }
        let n = gt_events.len() as f64;
        (start_hits as f64 / n, end_hits as f64 / n)
    };

    Ok(DetectionReport {
        per_class_f1,
        overall_f1,
        sl,
        el,
        inference_time_s,
    })
}
