//! Labeled skeleton sequences: loading, validation, normalization, and
//! synthetic generation.
//!
//! A [`Dataset`] is a list of [`Sequence`]s over a shared label vocabulary.
//! Recognition datasets label whole sequences; detection datasets label
//! individual frames, with a reserved background label as the last id.

mod io;
mod synth;

pub use io::{load_dataset, save_dataset};
pub use synth::{generate_synthetic, opposed_cycle_kernels, stitch_detection_streams, SynthConfig};

use crate::error::{Error, Result};

/// Label id. Always `< Dataset::label_names.len()`.
pub type Label = usize;

/// A single joint position. Sensor units before normalization,
/// dimensionless after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Joint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Joint { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// One frame of a skeleton sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub joints: Vec<Joint>,
    pub label: Label,
    /// Frame ordinal within its sequence; contiguous from 0.
    pub time_index: usize,
}

/// An ordered run of frames with a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub frames: Vec<SkeletonFrame>,
    /// Present for recognition data, where one label covers the whole
    /// sequence; absent for detection data labeled per frame.
    pub sequence_label: Option<Label>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A collection of sequences plus the label vocabulary they are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
    pub label_names: Vec<String>,
    pub joint_count: usize,
    /// True when the last label id denotes background ("no action") in
    /// detection data.
    pub has_background: bool,
}

impl Dataset {
    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    /// The background label id, when the dataset declares one.
    pub fn background_label(&self) -> Option<Label> {
        if self.has_background {
            Some(self.label_names.len() - 1)
        } else {
            None
        }
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    /// Checks every structural invariant; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.label_names.is_empty() {
            return Err(Error::Validation("empty label vocabulary".into()));
        }
        for seq in &self.sequences {
            if seq.frames.is_empty() {
                return Err(Error::Validation(format!("sequence '{}' is empty", seq.id)));
            }
            if let Some(l) = seq.sequence_label {
                if l >= self.label_names.len() {
                    return Err(Error::Validation(format!(
                        "sequence '{}': unknown label id {l}",
                        seq.id
                    )));
                }
            }
            for (t, frame) in seq.frames.iter().enumerate() {
                if frame.joints.len() != self.joint_count {
                    return Err(Error::Validation(format!(
                        "sequence '{}' frame {t}: inconsistent joint count {} (dataset declares {})",
                        seq.id,
                        frame.joints.len(),
                        self.joint_count
                    )));
                }
                if frame.time_index != t {
                    return Err(Error::Validation(format!(
                        "sequence '{}': time_index {} at position {t}",
                        seq.id, frame.time_index
                    )));
                }
                if frame.label >= self.label_names.len() {
                    return Err(Error::Validation(format!(
                        "sequence '{}' frame {t}: unknown label id {}",
                        seq.id, frame.label
                    )));
                }
                if let Some(l) = seq.sequence_label {
                    if frame.label != l {
                        return Err(Error::Validation(format!(
                            "sequence '{}' frame {t}: frame label {} disagrees with sequence label {l}",
                            seq.id, frame.label
                        )));
                    }
                }
                if !frame.joints.iter().all(Joint::is_finite) {
                    return Err(Error::Validation(format!(
                        "sequence '{}' frame {t}: non-finite coordinate",
                        seq.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Names the joint roles normalization needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkeletonSpec {
    pub root: usize,
    pub left_hip: usize,
    pub right_hip: usize,
}

/// Puts a frame into a canonical reference: root joint at the origin, the
/// ground-plane projection of the left-to-right hip vector along +x, and
/// coordinates divided by the summed root-to-joint distances. The result is
/// invariant to translation, uniform scaling, and rotation about the
/// vertical (y) axis, and applying it twice changes nothing.
pub fn normalize_skeleton(frame: &SkeletonFrame, spec: &SkeletonSpec) -> Result<SkeletonFrame> {
    let j = frame.joints.len();
    for (name, idx) in [
        ("root", spec.root),
        ("left_hip", spec.left_hip),
        ("right_hip", spec.right_hip),
    ] {
        if idx >= j {
            return Err(Error::Config(format!(
                "skeleton spec: {name} joint {idx} out of range for {j} joints"
            )));
        }
    }

    let root = frame.joints[spec.root];
    let mut joints: Vec<Joint> = frame
        .joints
        .iter()
        .map(|p| Joint::new(p.x - root.x, p.y - root.y, p.z - root.z))
        .collect();

    let hip = Joint::new(
        joints[spec.right_hip].x - joints[spec.left_hip].x,
        joints[spec.right_hip].y - joints[spec.left_hip].y,
        joints[spec.right_hip].z - joints[spec.left_hip].z,
    );
    let proj = (hip.x * hip.x + hip.z * hip.z).sqrt();
    if proj == 0.0 {
        return Err(Error::DegenerateSkeleton(
            "hip-to-hip ground projection has zero norm".into(),
        ));
    }
    let (cos, sin) = (hip.x / proj, hip.z / proj);
    for p in &mut joints {
        let (x, z) = (p.x, p.z);
        p.x = x * cos + z * sin;
        p.z = -x * sin + z * cos;
    }

    let scale: f64 = joints
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != spec.root)
        .map(|(_, p)| p.norm())
        .sum();
    if scale == 0.0 {
        return Err(Error::DegenerateSkeleton("zero limb-length sum".into()));
    }
    for p in &mut joints {
        p.x /= scale;
        p.y /= scale;
        p.z /= scale;
    }

    Ok(SkeletonFrame {
        joints,
        label: frame.label,
        time_index: frame.time_index,
    })
}

/// Normalizes every frame of a sequence, dropping frames with degenerate
/// skeletons (sensor glitches) and renumbering the survivors so time
/// indices stay contiguous.
pub fn normalize_sequence(seq: &Sequence, spec: &SkeletonSpec) -> Result<Sequence> {
    let mut frames = Vec::with_capacity(seq.frames.len());
    for frame in &seq.frames {
        match normalize_skeleton(frame, spec) {
            Ok(mut f) => {
                f.time_index = frames.len();
                frames.push(f);
            }
            Err(Error::DegenerateSkeleton(msg)) => {
                log::warn!(
                    "sequence '{}' frame {}: dropped ({msg})",
                    seq.id,
                    frame.time_index
                );
            }
            Err(e) => return Err(e),
        }
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput(format!(
            "sequence '{}': every frame degenerate",
            seq.id
        )));
    }
    Ok(Sequence {
        id: seq.id.clone(),
        frames,
        sequence_label: seq.sequence_label,
    })
}

/// Normalizes every sequence of a dataset in place. See [`normalize_sequence`].
pub fn normalize_dataset(dataset: &Dataset, spec: &SkeletonSpec) -> Result<Dataset> {
    let sequences = dataset
        .sequences
        .iter()
        .map(|s| normalize_sequence(s, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sequences,
        label_names: dataset.label_names.clone(),
        joint_count: dataset.joint_count,
        has_background: dataset.has_background,
    })
}
