//! The ensemble: trains, holds, and serializes a set of trees partitioned
//! by temporal distance.
//!
//! With temporal order `k ≥ 1` every tree gets a distance `d ∈ {1..k}`;
//! the assignment is an evenly balanced round-robin that is then
//! shuffled, so no distance class can end up empty. Trees train
//! independently on bootstrap-resampled sequences, each from its own
//! counter-based rng stream, which makes training deterministic for a
//! fixed seed regardless of how many threads run it.

mod io;

pub use io::{load_forest, save_forest};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, FeatureSpec};
use crate::tree::{
    finalize_leaves, grow_tree, LeafTables, TrainMatrix, TransitionTree, TreeTrainConfig,
};

/// Rng stream index reserved for forest-level decisions (the distance
/// shuffle); trees use their own index as stream, and no forest reaches
/// this many trees.
const FOREST_STREAM: u64 = u64::MAX;

/// Ensemble-level training knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    /// Number of trees in the ensemble.
    pub num_trees: usize,
    /// Temporal order k: trees pair each frame with one d ∈ {1..k} frames
    /// earlier. 0 turns the ensemble into a plain random forest.
    pub temporal_order: usize,
    /// Per-tree template; its temporal distance is filled in per tree.
    pub tree: TreeTrainConfig,
    /// Master seed; every tree derives its own stream from it.
    pub seed: u64,
    /// Frame representation the forest trains on and expects at
    /// prediction time.
    pub features: FeatureSpec,
    /// Resample whole sequences with replacement per tree. Sequences, not
    /// frames: frame-level resampling would break temporal adjacency.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: 50,
            temporal_order: 10,
            tree: TreeTrainConfig::default(),
            seed: 0,
            features: FeatureSpec::default(),
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees < 1 {
            return Err(Error::Config("num_trees must be ≥ 1".into()));
        }
        if self.temporal_order >= 1 && self.num_trees < self.temporal_order {
            return Err(Error::Config(format!(
                "num_trees {} cannot cover temporal order {}: every distance needs a tree",
                self.num_trees, self.temporal_order
            )));
        }
        if self.temporal_order == 0 && self.tree.transition_node_prob > 0.0 {
            return Err(Error::Config(
                "temporal_order 0 requires transition_node_prob 0 (no distances to train on)"
                    .into(),
            ));
        }
        // validate the template as each tree will actually see it
        let probe = TreeTrainConfig {
            d: if self.temporal_order >= 1 {
                Some(1)
            } else {
                None
            },
            ..self.tree.clone()
        };
        probe.validate()
    }
}

/// One member of the ensemble: structure, leaf statistics, and the
/// temporal distance it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestTree {
    pub tree: TransitionTree,
    pub tables: LeafTables,
    pub d: Option<usize>,
}

/// A trained ensemble, immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionForest {
    trees: Vec<ForestTree>,
    label_names: Vec<String>,
    feature_dim: usize,
    config: ForestConfig,
}

impl TransitionForest {
    pub fn trees(&self) -> &[ForestTree] {
        &self.trees
    }

    /// Trees trained at one temporal distance.
    pub fn trees_with_distance(&self, d: usize) -> impl Iterator<Item = &ForestTree> {
        self.trees.iter().filter(move |t| t.d == Some(d))
    }

    pub fn temporal_order(&self) -> usize {
        self.config.temporal_order
    }

    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// The label treated as "nothing happening" by detection, by the same
    /// convention the data loader uses: a last label named "background".
    pub fn background_label(&self) -> Option<Label> {
        match self.label_names.last() {
            Some(name) if name.eq_ignore_ascii_case("background") => {
                Some(self.label_names.len() - 1)
            }
            _ => None,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub(crate) fn from_parts(
        trees: Vec<ForestTree>,
        label_names: Vec<String>,
        feature_dim: usize,
        config: ForestConfig,
    ) -> Self {
        TransitionForest {
            trees,
            label_names,
            feature_dim,
            config,
        }
    }
}

/// The rng for tree `index` under master seed `seed`. Bootstrap draws
/// come first on this stream, then tree growth; the stream layout is
/// part of the reproducibility contract.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// The temporal distance of every tree: an even round-robin over {1..k}
/// (sizes differ by at most one) shuffled on the forest-level stream.
fn assign_distances(cfg: &ForestConfig) -> Vec<Option<usize>> {
    if cfg.temporal_order == 0 {
        return vec![None; cfg.num_trees];
    }
    let mut ds: Vec<Option<usize>> = (0..cfg.num_trees)
        .map(|i| Some(i % cfg.temporal_order + 1))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(FOREST_STREAM);
    ds.shuffle(&mut rng);
    ds
}

/// Bootstrap sequence choice for one tree: `n` draws with replacement,
/// or the identity when bagging is off.
fn bootstrap_indices(rng: &mut impl Rng, n: usize, bootstrap: bool) -> Vec<usize> {
    if bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

/// Trains the full ensemble on a dataset. Features are extracted once;
/// every tree then draws its own bootstrap sample of sequences, gets its
/// assigned temporal distance, and grows independently. Deterministic in
/// (dataset, config), whatever the thread count.
pub fn train_forest(dataset: &Dataset, cfg: &ForestConfig) -> Result<TransitionForest> {
    cfg.validate()?;
    dataset.validate()?;

    let feats: Vec<FeatureSequence> = dataset
        .sequences
        .iter()
        .map(|seq| cfg.features.extract(seq))
        .collect::<Result<_>>()?;
    let feature_dim = cfg.features.dim(dataset.joint_count);
    let num_labels = dataset.num_labels();
    let distances = assign_distances(cfg);

    let trees: Vec<ForestTree> = (0..cfg.num_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(cfg.seed, i);
            let chosen = bootstrap_indices(&mut rng, feats.len(), cfg.bootstrap);
            let matrix =
                TrainMatrix::from_feature_sequences(chosen.iter().map(|&s| &feats[s]), num_labels)?;
            let tree_cfg = TreeTrainConfig {
                d: distances[i],
                ..cfg.tree.clone()
            };
            let grown = grow_tree(&matrix, &tree_cfg, &mut rng)?;
            let tables = finalize_leaves(&grown, &matrix, &tree_cfg)?;
            Ok(ForestTree {
                tree: grown.tree,
                tables,
                d: distances[i],
            })
        })
        .collect::<Result<_>>()?;

    Ok(TransitionForest {
        trees,
        label_names: dataset.label_names.clone(),
        feature_dim,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, opposed_cycle_kernels, SynthConfig};
    use crate::features::Representation;

    fn tiny_dataset(seed: u64) -> Dataset {
        let config = SynthConfig {
            num_labels: 2,
            num_joints: 3,
            sequences_per_label: 4,
            frames_per_sequence: 16,
            pose_centers_per_label: 3,
            transition_kernels: opposed_cycle_kernels(3),
            noise_sigma: 0.05,
            shared_pose_pool: true,
        };
        generate_synthetic(&config, seed).unwrap()
    }

    fn tiny_cfg() -> ForestConfig {
        ForestConfig {
            num_trees: 6,
            temporal_order: 2,
            tree: TreeTrainConfig {
                max_depth: 3,
                min_samples_split: 8,
                n_candidate_features: 3,
                n_candidate_thresholds: 4,
                coordinate_descent_sweeps: 3,
                min_transition_support: 5,
                ..TreeTrainConfig::default()
            },
            seed: 11,
            features: FeatureSpec {
                representation: Representation::Jp,
                ..FeatureSpec::default()
            },
            bootstrap: true,
        }
    }

    #[test]
    fn distances_partition_evenly_and_cover_every_value() {
        for (trees, k) in [(6usize, 2usize), (7, 3), (10, 10), (5, 1)] {
            let cfg = ForestConfig {
                num_trees: trees,
                temporal_order: k,
                seed: 3,
                ..tiny_cfg()
            };
            let ds = assign_distances(&cfg);
            assert_eq!(ds.len(), trees);
            let mut counts = vec![0usize; k + 1];
            for d in ds {
                counts[d.unwrap()] += 1;
            }
            for (d, &count) in counts.iter().enumerate().skip(1) {
                assert!(count >= trees / k, "d={d} got {count}");
                assert!(count <= trees.div_ceil(k), "d={d} got {count}");
            }
        }
    }

    #[test]
    fn six_trees_order_two_gives_three_per_distance() {
        let cfg = ForestConfig {
            num_trees: 6,
            temporal_order: 2,
            ..tiny_cfg()
        };
        let forest = train_forest(&tiny_dataset(1), &cfg).unwrap();
        assert_eq!(forest.trees_with_distance(1).count(), 3);
        assert_eq!(forest.trees_with_distance(2).count(), 3);
    }

    #[test]
    fn order_zero_is_a_plain_random_forest() {
        let cfg = ForestConfig {
            temporal_order: 0,
            tree: TreeTrainConfig {
                transition_node_prob: 0.0,
                ..tiny_cfg().tree
            },
            ..tiny_cfg()
        };
        let forest = train_forest(&tiny_dataset(2), &cfg).unwrap();
        for tree in forest.trees() {
            assert_eq!(tree.d, None);
            assert_eq!(tree.tables.trans_entries().count(), 0);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ds = tiny_dataset(3);
        let cfg = tiny_cfg();
        let a = train_forest(&ds, &cfg).unwrap();
        let b = train_forest(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_fewer_trees_than_distances() {
        let cfg = ForestConfig {
            num_trees: 2,
            temporal_order: 3,
            ..tiny_cfg()
        };
        assert!(matches!(
            train_forest(&tiny_dataset(1), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejects_transition_nodes_without_temporal_order() {
        let cfg = ForestConfig {
            temporal_order: 0,
            ..tiny_cfg()
        };
        assert!(cfg.tree.transition_node_prob > 0.0);
        assert!(matches!(
            train_forest(&tiny_dataset(1), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn background_label_follows_the_naming_convention() {
        let mut ds = tiny_dataset(4);
        let forest = train_forest(&ds, &tiny_cfg()).unwrap();
        assert_eq!(forest.background_label(), None);

        ds.label_names[1] = "Background".into();
        ds.has_background = true;
        let forest = train_forest(&ds, &tiny_cfg()).unwrap();
        assert_eq!(forest.background_label(), Some(1));
    }
}
