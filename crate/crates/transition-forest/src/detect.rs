//! Online action detection: turning a live posterior stream into labeled
//! action events.
//!
//! A two-state machine watches the per-frame posteriors. While idle, a
//! non-background label whose posterior clears the start threshold opens
//! an event and locks its label. While an event is open, the running
//! mean of that label's posterior since the start is tracked — no label
//! change is allowed — and when the mean falls below the end threshold
//! the event is emitted as having ended on the previous frame. The frame
//! that triggered the emission is consumed; a new event can start on the
//! next frame at the earliest, so events never overlap. A stream that
//! ends mid-event flushes it.

use crate::data::Label;
use crate::error::{Error, Result};
use crate::forest::TransitionForest;
use crate::inference::{predict_frame, FramePosterior, PredictionContext};

/// Start/end thresholds and the minimum length an event must reach to be
/// reported.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// Posterior a label must exceed to open an event.
    pub beta_start: f64,
    /// Running mean below which the open event ends.
    pub beta_end: f64,
    /// Events spanning fewer frames are dropped silently.
    pub min_event_len: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            beta_start: 0.79,
            beta_end: 0.16,
            min_event_len: 1,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.beta_start)
            && (0.0..=1.0).contains(&self.beta_end)
            && self.beta_end <= self.beta_start;
        if !ok {
            return Err(Error::Config(format!(
                "detector thresholds must satisfy 0 ≤ beta_end ≤ beta_start ≤ 1, got start {} end {}",
                self.beta_start, self.beta_end
            )));
        }
        Ok(())
    }
}

/// One detected action: inclusive frame span and the running mean of the
/// label's posterior at the moment the event closed.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub label: Label,
    pub start_frame: usize,
    pub end_frame: usize,
    pub mean_score: f64,
}

enum TrackerState {
    Idle,
    Active {
        label: Label,
        start: usize,
        score_sum: f64,
        count: usize,
    },
}

/// The bare state machine over posteriors, independent of how they were
/// produced. Feed it one posterior per frame in order.
pub struct EventTracker {
    params: DetectorParams,
    background: Option<Label>,
    state: TrackerState,
    t: usize,
}

impl EventTracker {
    pub fn new(params: DetectorParams, background: Option<Label>) -> Result<Self> {
        params.validate()?;
        Ok(EventTracker {
            params,
            background,
            state: TrackerState::Idle,
            t: 0,
        })
    }

    /// The best label an event may carry: highest posterior among
    /// non-background labels, lowest id on ties.
    fn best_candidate(&self, probs: &[f64]) -> (Label, f64) {
        let mut best: Option<(Label, f64)> = None;
        for (label, &p) in probs.iter().enumerate() {
            if Some(label) == self.background {
                continue;
            }
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((label, p));
            }
        }
        best.expect("at least one non-background label")
    }

    fn close(&self, label: Label, start: usize, end: usize, mean: f64) -> Option<DetectionEvent> {
        (end + 1 - start >= self.params.min_event_len).then_some(DetectionEvent {
            label,
            start_frame: start,
            end_frame: end,
            mean_score: mean,
        })
    }

    /// Advances the machine by one frame; returns the event that ended on
    /// this frame, if any.
    pub fn observe(&mut self, probs: &[f64]) -> Option<DetectionEvent> {
        let t = self.t;
        self.t += 1;
        match &mut self.state {
            TrackerState::Idle => {
                let (label, p) = self.best_candidate(probs);
                if p > self.params.beta_start {
                    self.state = TrackerState::Active {
                        label,
                        start: t,
                        score_sum: p,
                        count: 1,
                    };
                }
                None
            }
            TrackerState::Active {
                label,
                start,
                score_sum,
                count,
            } => {
                *score_sum += probs[*label];
                *count += 1;
                let (label, start, mean) = (*label, *start, *score_sum / *count as f64);
                if mean < self.params.beta_end {
                    self.state = TrackerState::Idle;
                    self.close(label, start, t - 1, mean)
                } else {
                    None
                }
            }
        }
    }

    /// Flushes an event still open at stream end.
    pub fn finish(&mut self) -> Option<DetectionEvent> {
        let event = match &self.state {
            TrackerState::Idle => None,
            TrackerState::Active {
                label,
                start,
                score_sum,
                count,
            } => self.close(*label, *start, self.t - 1, *score_sum / *count as f64),
        };
        self.state = TrackerState::Idle;
        event
    }
}

/// Streaming detector over raw feature frames: routes each frame through
/// the forest, then through the event state machine. One detector per
/// stream; memory stays bounded by the forest's temporal order.
pub struct OnlineDetector<'f> {
    forest: &'f TransitionForest,
    ctx: PredictionContext,
    tracker: EventTracker,
}

impl<'f> OnlineDetector<'f> {
    pub fn new(forest: &'f TransitionForest, params: DetectorParams, soft: bool) -> Result<Self> {
        Ok(OnlineDetector {
            forest,
            ctx: PredictionContext::new(forest, soft),
            tracker: EventTracker::new(params, forest.background_label())?,
        })
    }

    /// Processes one frame: returns its posterior and the event that
    /// ended on it, if any.
    pub fn push(&mut self, x: &[f64]) -> Result<(FramePosterior, Option<DetectionEvent>)> {
        let posterior = predict_frame(self.forest, x, &mut self.ctx)?;
        let event = self.tracker.observe(&posterior.probs);
        Ok((posterior, event))
    }

    /// Ends the stream, flushing any open event. The detector can then
    /// be dropped; a new stream needs a new detector.
    pub fn finish(mut self) -> Option<DetectionEvent> {
        self.tracker.finish()
    }
}
