//! Synthetic skeleton sequences with controlled dynamics.
//!
//! Each label owns a Markov chain over latent pose prototypes. A sequence
//! is generated by walking the chain and emitting the visited prototypes
//! plus isotropic Gaussian noise. With `shared_pose_pool` set, every label
//! draws from the *same* prototypes, so the classes are indistinguishable
//! frame-by-frame and differ only in how poses follow one another — the
//! regime where transition splits matter and static splits cannot help.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Joint, Sequence, SkeletonFrame};
use crate::error::{Error, Result};

/// Generation parameters. `transition_kernels[l][i][j]` is the probability
/// that label `l` moves from prototype `i` to prototype `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_labels: usize,
    pub num_joints: usize,
    pub sequences_per_label: usize,
    pub frames_per_sequence: usize,
    pub pose_centers_per_label: usize,
    pub transition_kernels: Vec<Vec<Vec<f64>>>,
    pub noise_sigma: f64,
    pub shared_pose_pool: bool,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.num_labels == 0 || self.num_joints == 0 {
            return Err(Error::Config(
                "need at least one label and one joint".into(),
            ));
        }
        if self.frames_per_sequence == 0 || self.sequences_per_label == 0 {
            return Err(Error::Config(
                "need at least one frame and one sequence".into(),
            ));
        }
        let p = self.pose_centers_per_label;
        if p == 0 {
            return Err(Error::Config("need at least one pose prototype".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma {} not in [0, ∞)",
                self.noise_sigma
            )));
        }
        if self.transition_kernels.len() != self.num_labels {
            return Err(Error::Config(format!(
                "{} transition kernels for {} labels",
                self.transition_kernels.len(),
                self.num_labels
            )));
        }
        for (l, kernel) in self.transition_kernels.iter().enumerate() {
            if kernel.len() != p {
                return Err(Error::Config(format!(
                    "label {l}: kernel has {} rows, expected {p}",
                    kernel.len()
                )));
            }
            for (i, row) in kernel.iter().enumerate() {
                if row.len() != p {
                    return Err(Error::Config(format!(
                        "label {l}: kernel row {i} has {} entries, expected {p}",
                        row.len()
                    )));
                }
                if row.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
                    return Err(Error::Config(format!(
                        "label {l}: kernel row {i} has an entry outside [0, 1]"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "label {l}: kernel row {i} sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A convenient pair of kernels for benchmarks: label 0 cycles forward
/// through the prototypes, label 1 cycles backward. Both walks visit every
/// prototype equally often, so the classes share their pose distribution
/// exactly and differ only in transition direction.
pub fn opposed_cycle_kernels(num_prototypes: usize) -> Vec<Vec<Vec<f64>>> {
    let p = num_prototypes;
    let mut forward = vec![vec![0.0; p]; p];
    let mut backward = vec![vec![0.0; p]; p];
    for i in 0..p {
        forward[i][(i + 1) % p] = 1.0;
        backward[i][(i + p - 1) % p] = 1.0;
    }
    vec![forward, backward]
}

/// Generates a recognition-style dataset (whole-sequence labels, every
/// frame labeled with its sequence's label). Pure function of
/// `(config, seed)`: the same inputs always produce the same dataset.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.noise_sigma)
        .map_err(|e| Error::Config(format!("noise_sigma: {e}")))?;

    let p = config.pose_centers_per_label;
    let pools: Vec<Vec<Vec<Joint>>> = if config.shared_pose_pool {
        let shared = sample_pool(&mut rng, p, config.num_joints);
        vec![shared; config.num_labels]
    } else {
        (0..config.num_labels)
            .map(|_| sample_pool(&mut rng, p, config.num_joints))
            .collect()
    };

    let mut sequences = Vec::with_capacity(config.num_labels * config.sequences_per_label);
    for (label, (kernel, pool)) in config.transition_kernels.iter().zip(&pools).enumerate() {
        for s in 0..config.sequences_per_label {
            let mut state = rng.gen_range(0..p);
            let mut frames = Vec::with_capacity(config.frames_per_sequence);
            for t in 0..config.frames_per_sequence {
                if t > 0 {
                    state = step(kernel, state, &mut rng);
                }
                let joints = pool[state]
                    .iter()
                    .map(|proto| {
                        Joint::new(
                            proto.x + noise.sample(&mut rng),
                            proto.y + noise.sample(&mut rng),
                            proto.z + noise.sample(&mut rng),
                        )
                    })
                    .collect();
                frames.push(SkeletonFrame {
                    joints,
                    label,
                    time_index: t,
                });
            }
            sequences.push(Sequence {
                id: format!("l{label}_s{s:03}"),
                frames,
                sequence_label: Some(label),
            });
        }
    }

    Ok(Dataset {
        sequences,
        label_names: (0..config.num_labels)
            .map(|l| format!("label{l}"))
            .collect(),
        joint_count: config.num_joints,
        has_background: false,
    })
}

/// Splices recognition sequences into detection-style streams: each
/// stream alternates background filler with `actions_per_stream` action
/// segments, labeled per frame.
///
/// The source's *last* label provides the background material; in the
/// output it is renamed `background` so the flag survives a save/load
/// round trip (the loader recognizes background by that name). The
/// remaining labels provide the action segments, chosen uniformly at
/// random. Every segment is a contiguous slice cut from a randomly
/// chosen source sequence of the right label at a random offset, so the
/// spliced dynamics are genuine. Deterministic in `(source, seed)`.
pub fn stitch_detection_streams(
    source: &Dataset,
    num_streams: usize,
    actions_per_stream: usize,
    action_len: usize,
    gap_len: usize,
    seed: u64,
) -> Result<Dataset> {
    if source.num_labels() < 2 {
        return Err(Error::Config(
            "stitching needs at least one action label besides background".into(),
        ));
    }
    if num_streams == 0 || actions_per_stream == 0 || action_len == 0 || gap_len == 0 {
        return Err(Error::Config(
            "streams, actions per stream, and segment lengths must all be positive".into(),
        ));
    }
    let background = source.num_labels() - 1;
    let mut by_label: Vec<Vec<&Sequence>> = vec![Vec::new(); source.num_labels()];
    for seq in &source.sequences {
        match seq.sequence_label {
            Some(l) if l < source.num_labels() => by_label[l].push(seq),
            _ => {
                return Err(Error::Validation(format!(
                    "sequence '{}' has no usable whole-sequence label",
                    seq.id
                )))
            }
        }
    }
    let long_enough = |label: usize, need: usize| by_label[label].iter().any(|s| s.len() >= need);
    for label in 0..source.num_labels() {
        let need = if label == background {
            gap_len
        } else {
            action_len
        };
        if !long_enough(label, need) {
            return Err(Error::Validation(format!(
                "no sequence of label {label} has the {need} frames a segment needs"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cut = |label: usize, need: usize, rng: &mut ChaCha8Rng| -> Vec<SkeletonFrame> {
        let pool: Vec<&&Sequence> = by_label[label].iter().filter(|s| s.len() >= need).collect();
        let seq = pool[rng.gen_range(0..pool.len())];
        let offset = rng.gen_range(0..=seq.len() - need);
        seq.frames[offset..offset + need].to_vec()
    };

    fn append(segment: Vec<SkeletonFrame>, label: usize, frames: &mut Vec<SkeletonFrame>) {
        for mut frame in segment {
            frame.label = label;
            frame.time_index = frames.len();
            frames.push(frame);
        }
    }

    let mut sequences = Vec::with_capacity(num_streams);
    for stream in 0..num_streams {
        let mut frames = Vec::new();
        append(cut(background, gap_len, &mut rng), background, &mut frames);
        for _ in 0..actions_per_stream {
            let action = rng.gen_range(0..background);
            append(cut(action, action_len, &mut rng), action, &mut frames);
            append(cut(background, gap_len, &mut rng), background, &mut frames);
        }
        sequences.push(Sequence {
            id: format!("stream{stream:03}"),
            frames,
            sequence_label: None,
        });
    }

    let mut label_names = source.label_names.clone();
    *label_names.last_mut().expect("validated non-empty") = "background".into();
    Ok(Dataset {
        sequences,
        label_names,
        joint_count: source.joint_count,
        has_background: true,
    })
}

fn sample_pool(rng: &mut ChaCha8Rng, prototypes: usize, joints: usize) -> Vec<Vec<Joint>> {
    (0..prototypes)
        .map(|_| {
            (0..joints)
                .map(|_| {
                    Joint::new(
                        rng.gen_range(-1.0..=1.0),
                        rng.gen_range(-1.0..=1.0),
                        rng.gen_range(-1.0..=1.0),
                    )
                })
                .collect()
        })
        .collect()
}

/// Inverse-CDF draw from one kernel row.
fn step(kernel: &[Vec<f64>], from: usize, rng: &mut ChaCha8Rng) -> usize {
    let row = &kernel[from];
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &q) in row.iter().enumerate() {
        acc += q;
        if u < acc {
            return j;
        }
    }
    row.len() - 1
}
