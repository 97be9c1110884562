//! Per-frame feature vectors from skeleton sequences.
//!
//! Four representations: raw joint positions (JP), pairwise joint
//! distances (RJP), a moving-pose augmentation that appends finite-
//! difference velocity and acceleration blocks to either base (MP), and a
//! sliding-window stack of any of those for order-aware baselines (SW).
//! All of them map a sequence to one fixed-dimension vector per frame,
//! keeping length, labels and time indices.

use serde::{Deserialize, Serialize};

use crate::data::{Label, Sequence};
use crate::error::{Error, Result};

/// One frame's feature vector with the label and position it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub vector: Vec<f64>,
    pub label: Label,
    pub time_index: usize,
}

/// A sequence after feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub id: String,
    pub frames: Vec<FeatureFrame>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Dimension of the frame vectors (0 for an empty sequence).
    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.vector.len())
    }
}

/// Base representation choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// Flattened joint coordinates, D = 3J.
    Jp,
    /// Euclidean distances of all unordered joint pairs, D = J(J−1)/2.
    Rjp,
    /// JP plus velocity and acceleration blocks, D = 9J.
    Mp,
    /// RJP plus velocity and acceleration blocks, D = 3·J(J−1)/2.
    MpRjp,
}

/// Full feature pipeline: a representation, its derivative weights, and an
/// optional sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub representation: Representation,
    /// Velocity weight for the MP variants.
    pub alpha: f64,
    /// Acceleration weight for the MP variants.
    pub beta: f64,
    /// Frames stacked per vector; 1 disables stacking.
    pub window: usize,
}

pub const DEFAULT_MP_ALPHA: f64 = 0.75;
pub const DEFAULT_MP_BETA: f64 = 0.6;

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            representation: Representation::Jp,
            alpha: DEFAULT_MP_ALPHA,
            beta: DEFAULT_MP_BETA,
            window: 1,
        }
    }
}

impl FeatureSpec {
    /// Vector dimension this spec produces for `joint_count` joints.
    pub fn dim(&self, joint_count: usize) -> usize {
        let base = match self.representation {
            Representation::Jp => 3 * joint_count,
            Representation::Rjp => joint_count * (joint_count - 1) / 2,
            Representation::Mp => 3 * (3 * joint_count),
            Representation::MpRjp => 3 * (joint_count * (joint_count - 1) / 2),
        };
        base * self.window
    }

    /// Runs the whole pipeline on one sequence.
    pub fn extract(&self, seq: &Sequence) -> Result<FeatureSequence> {
        let fs = match self.representation {
            Representation::Jp => extract_jp(seq),
            Representation::Rjp => extract_rjp(seq),
            Representation::Mp => extract_mp(seq, Representation::Jp, self.alpha, self.beta)?,
            Representation::MpRjp => extract_mp(seq, Representation::Rjp, self.alpha, self.beta)?,
        };
        if self.window == 1 {
            Ok(fs)
        } else {
            extract_window(&fs, self.window)
        }
    }
}

/// Joint positions: each frame's coordinates flattened in joint order.
pub fn extract_jp(seq: &Sequence) -> FeatureSequence {
    map_frames(seq, |joints| {
        joints.iter().flat_map(|j| [j.x, j.y, j.z]).collect()
    })
}

/// Relative joint positions: Euclidean distances of all unordered joint
/// pairs in lexicographic (i, j) order with i < j. Depends only on the
/// skeleton's shape, so any rigid motion of the input leaves it unchanged.
pub fn extract_rjp(seq: &Sequence) -> FeatureSequence {
    map_frames(seq, |joints| {
        let mut v = Vec::with_capacity(joints.len() * (joints.len().saturating_sub(1)) / 2);
        for i in 0..joints.len() {
            for j in (i + 1)..joints.len() {
                let (a, b) = (&joints[i], &joints[j]);
                let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
                v.push((dx * dx + dy * dy + dz * dz).sqrt());
            }
        }
        v
    })
}

/// Moving-pose augmentation: `[p_t, α(p_{t+1} − p_{t−1}), β(p_{t+2} + p_{t−2} − 2 p_t)]`
/// over the base representation's vectors, with out-of-range neighbors
/// clamped to the sequence bounds.
pub fn extract_mp(
    seq: &Sequence,
    base: Representation,
    alpha: f64,
    beta: f64,
) -> Result<FeatureSequence> {
    let base_fs = match base {
        Representation::Jp => extract_jp(seq),
        Representation::Rjp => extract_rjp(seq),
        other => {
            return Err(Error::Config(format!(
                "moving-pose base must be a static representation, got {other:?}"
            )))
        }
    };
    let n = base_fs.frames.len();
    let at = |t: isize| -> &[f64] {
        let t = t.clamp(0, n as isize - 1) as usize;
        &base_fs.frames[t].vector
    };
    let frames = (0..n)
        .map(|t| {
            let ti = t as isize;
            let (p, prev, next) = (at(ti), at(ti - 1), at(ti + 1));
            let (prev2, next2) = (at(ti - 2), at(ti + 2));
            let mut vector = Vec::with_capacity(3 * p.len());
            vector.extend_from_slice(p);
            vector.extend((0..p.len()).map(|d| alpha * (next[d] - prev[d])));
            vector.extend((0..p.len()).map(|d| beta * (next2[d] + prev2[d] - 2.0 * p[d])));
            FeatureFrame {
                vector,
                label: base_fs.frames[t].label,
                time_index: t,
            }
        })
        .collect();
    Ok(FeatureSequence {
        id: base_fs.id,
        frames,
    })
}

/// Sliding-window stack: the vector at `t` becomes the concatenation of
/// the vectors at `t−w+1 ..= t`, clamping below 0, labeled by frame `t`.
pub fn extract_window(fs: &FeatureSequence, w: usize) -> Result<FeatureSequence> {
    if w < 1 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    let frames = fs
        .frames
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            let mut vector = Vec::with_capacity(w * frame.vector.len());
            for offset in (0..w).rev() {
                let s = t.saturating_sub(offset);
                vector.extend_from_slice(&fs.frames[s].vector);
            }
            FeatureFrame {
                vector,
                label: frame.label,
                time_index: t,
            }
        })
        .collect();
    Ok(FeatureSequence {
        id: fs.id.clone(),
        frames,
    })
}

fn map_frames(seq: &Sequence, f: impl Fn(&[crate::data::Joint]) -> Vec<f64>) -> FeatureSequence {
    FeatureSequence {
        id: seq.id.clone(),
        frames: seq
            .frames
            .iter()
            .map(|frame| FeatureFrame {
                vector: f(&frame.joints),
                label: frame.label,
                time_index: frame.time_index,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Joint, SkeletonFrame};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq_of(frames: Vec<Vec<Joint>>) -> Sequence {
        Sequence {
            id: "t".into(),
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(t, joints)| SkeletonFrame {
                    joints,
                    label: t % 2,
                    time_index: t,
                })
                .collect(),
            sequence_label: None,
        }
    }

    #[test]
    fn jp_flattens_coordinates() {
        let seq = seq_of(vec![vec![
            Joint::new(0.0, 0.0, 0.0),
            Joint::new(1.0, 0.0, 0.0),
        ]]);
        let fs = extract_jp(&seq);
        assert_eq!(fs.frames[0].vector, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn jp_matches_input_on_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let joints: Vec<Joint> = (0..7)
                .map(|_| Joint::new(rng.gen(), rng.gen(), rng.gen()))
                .collect();
            let seq = seq_of(vec![joints.clone()]);
            let fs = extract_jp(&seq);
            for (j, joint) in joints.iter().enumerate() {
                assert_eq!(fs.frames[0].vector[3 * j], joint.x);
                assert_eq!(fs.frames[0].vector[3 * j + 1], joint.y);
                assert_eq!(fs.frames[0].vector[3 * j + 2], joint.z);
            }
        }
    }

    #[test]
    fn feature_dims_for_20_joints() {
        let jp = FeatureSpec {
            representation: Representation::Jp,
            ..Default::default()
        };
        let rjp = FeatureSpec {
            representation: Representation::Rjp,
            ..Default::default()
        };
        assert_eq!(jp.dim(20), 60);
        assert_eq!(rjp.dim(20), 190);
    }

    #[test]
    fn rjp_collinear_distances() {
        let seq = seq_of(vec![vec![
            Joint::new(0.0, 0.0, 0.0),
            Joint::new(1.0, 0.0, 0.0),
            Joint::new(2.0, 0.0, 0.0),
        ]]);
        let fs = extract_rjp(&seq);
        assert_eq!(fs.frames[0].vector, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn rjp_invariant_under_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let joints: Vec<Joint> = (0..6)
                .map(|_| Joint::new(rng.gen(), rng.gen(), rng.gen()))
                .collect();
            // random rotation about all three axes plus a translation
            let (a, b, c): (f64, f64, f64) = (
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
            );
            let (tx, ty, tz): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let moved: Vec<Joint> = joints
                .iter()
                .map(|p| {
                    // Rz(c) · Ry(b) · Rx(a) applied joint-wise
                    let (y, z) = (p.y * a.cos() - p.z * a.sin(), p.y * a.sin() + p.z * a.cos());
                    let (x, z) = (p.x * b.cos() + z * b.sin(), -p.x * b.sin() + z * b.cos());
                    let (x, y) = (x * c.cos() - y * c.sin(), x * c.sin() + y * c.cos());
                    Joint::new(x + tx, y + ty, z + tz)
                })
                .collect();
            let base = extract_rjp(&seq_of(vec![joints]));
            let transformed = extract_rjp(&seq_of(vec![moved]));
            for (u, v) in base.frames[0]
                .vector
                .iter()
                .zip(&transformed.frames[0].vector)
            {
                assert!((u - v).abs() <= 1e-12, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn mp_constant_sequence_has_zero_derivatives() {
        let joints = vec![Joint::new(0.3, -0.1, 0.8), Joint::new(0.0, 1.0, 0.0)];
        let seq = seq_of(vec![joints.clone(), joints.clone(), joints.clone(), joints]);
        let fs = extract_mp(&seq, Representation::Jp, 0.75, 0.6).unwrap();
        for frame in &fs.frames {
            assert_eq!(frame.vector.len(), 18);
            assert!(frame.vector[6..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mp_linear_motion_interior_frame() {
        // p_t = t·v with v = (1, 2, 3): central velocity difference is 2v,
        // second difference is 0.
        let v = (1.0, 2.0, 3.0);
        let frames: Vec<Vec<Joint>> = (0..7)
            .map(|t| vec![Joint::new(t as f64 * v.0, t as f64 * v.1, t as f64 * v.2)])
            .collect();
        let fs = extract_mp(&seq_of(frames), Representation::Jp, 0.75, 0.6).unwrap();
        let mid = &fs.frames[3].vector;
        assert_eq!(
            &mid[3..6],
            &[0.75 * 2.0 * v.0, 0.75 * 2.0 * v.1, 0.75 * 2.0 * v.2]
        );
        assert!(mid[6..].iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn mp_length_one_sequence_clamps_to_zero_derivatives() {
        let seq = seq_of(vec![vec![Joint::new(1.0, 2.0, 3.0)]]);
        let fs = extract_mp(&seq, Representation::Jp, 0.75, 0.6).unwrap();
        assert_eq!(
            fs.frames[0].vector,
            vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn window_stacks_and_clamps() {
        let fs = FeatureSequence {
            id: "w".into(),
            frames: [[1.0], [2.0], [3.0]]
                .iter()
                .enumerate()
                .map(|(t, v)| FeatureFrame {
                    vector: v.to_vec(),
                    label: 0,
                    time_index: t,
                })
                .collect(),
        };
        let w2 = extract_window(&fs, 2).unwrap();
        assert_eq!(w2.frames[0].vector, vec![1.0, 1.0]);
        assert_eq!(w2.frames[1].vector, vec![1.0, 2.0]);
        assert_eq!(w2.frames[2].vector, vec![2.0, 3.0]);

        let w3 = extract_window(&fs, 3).unwrap();
        assert_eq!(w3.frames[0].vector, vec![1.0, 1.0, 1.0]);

        let w1 = extract_window(&fs, 1).unwrap();
        assert_eq!(w1, fs);

        assert!(extract_window(&fs, 0).is_err());
    }

    #[test]
    fn extractors_preserve_length_labels_and_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<Vec<Joint>> = (0..9)
            .map(|_| {
                (0..4)
                    .map(|_| Joint::new(rng.gen(), rng.gen(), rng.gen()))
                    .collect()
            })
            .collect();
        let seq = seq_of(frames);
        for spec in [
            FeatureSpec {
                representation: Representation::Jp,
                ..Default::default()
            },
            FeatureSpec {
                representation: Representation::Rjp,
                ..Default::default()
            },
            FeatureSpec {
                representation: Representation::Mp,
                ..Default::default()
            },
            FeatureSpec {
                representation: Representation::MpRjp,
                ..Default::default()
            },
            FeatureSpec {
                representation: Representation::Jp,
                window: 4,
                ..Default::default()
            },
        ] {
            let fs = spec.extract(&seq).unwrap();
            assert_eq!(fs.len(), seq.len());
            assert_eq!(fs.dim(), spec.dim(4));
            for (frame, feat) in seq.frames.iter().zip(&fs.frames) {
                assert_eq!(frame.label, feat.label);
                assert_eq!(frame.time_index, feat.time_index);
                assert_eq!(feat.vector.len(), spec.dim(4));
                assert!(feat.vector.iter().all(|v| v.is_finite()));
            }
        }
    }
}
