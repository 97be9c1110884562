//! Versioned binary model container (`.tfor`).
//!
//! Layout: magic `TFOR`, format version, the total byte length, the
//! ensemble header (temporal order, tree count, feature dimensionality,
//! label vocabulary, config echo as TOML), one block per tree (distance,
//! flat breadth-first node array, leaf class tables, sparse transition
//! entries), and a trailing CRC-32 over everything before it. All
//! integers and floats are little-endian; probabilities are stored as
//! raw 64-bit floats, so a round trip is bit-exact.
//!
//! Loading verifies magic, version, declared length, and checksum before
//! touching the body, so a bad file never yields a partial forest.

use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, ModelError, Result};
use crate::forest::{ForestConfig, ForestTree, TransitionForest};
use crate::stats::NodeId;
use crate::tree::{LeafTables, NodeKind, SplitParams, TransEntry, TransitionTree, TreeNode};

const MAGIC: &[u8; 4] = b"TFOR";
const VERSION: u16 = 1;

fn model_err(path: &Path, kind: ModelError) -> Error {
    Error::Model {
        path: PathBuf::from(path),
        kind,
    }
}

// ── Writing ──────────────────────────────────────────────────────────────

fn write_string_u16(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::Validation(format!(
            "label name too long: {} bytes",
            bytes.len()
        )));
    }
    buf.write_u16::<LittleEndian>(bytes.len() as u16).unwrap();
    buf.extend_from_slice(bytes);
    Ok(())
}

fn write_tree(buf: &mut Vec<u8>, tree: &ForestTree, num_labels: usize) {
    buf.write_u8(tree.d.map_or(0, |d| d as u8)).unwrap();
    buf.write_u32::<LittleEndian>(tree.tree.nodes().len() as u32)
        .unwrap();
    for node in tree.tree.nodes() {
        buf.write_u64::<LittleEndian>(node.id).unwrap();
        match &node.kind {
            NodeKind::Internal { split, .. } => {
                buf.write_u8(0).unwrap();
                buf.write_u32::<LittleEndian>(split.feature_index as u32)
                    .unwrap();
                buf.write_f64::<LittleEndian>(split.threshold).unwrap();
            }
            NodeKind::Leaf { .. } => buf.write_u8(1).unwrap(),
        }
    }
    buf.write_u32::<LittleEndian>(tree.tree.num_leaves() as u32)
        .unwrap();
    for leaf in 0..tree.tree.num_leaves() {
        for &p in tree.tables.class_dist(leaf) {
            buf.write_f64::<LittleEndian>(p).unwrap();
        }
    }
    let entries: Vec<_> = tree.tables.trans_entries().collect();
    buf.write_u32::<LittleEndian>(entries.len() as u32).unwrap();
    for (&(prev, cur), entry) in entries {
        buf.write_u32::<LittleEndian>(prev).unwrap();
        buf.write_u32::<LittleEndian>(cur).unwrap();
        buf.write_u32::<LittleEndian>(entry.support).unwrap();
        debug_assert_eq!(entry.rows.len(), num_labels);
        for row in &entry.rows {
            debug_assert_eq!(row.len(), num_labels);
            for &p in row {
                buf.write_f64::<LittleEndian>(p).unwrap();
            }
        }
    }
}

/// Serializes a trained forest. The same forest always produces the same
/// bytes.
pub fn save_forest(forest: &TransitionForest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u16::<LittleEndian>(VERSION).unwrap();
    // placeholder for the total length, patched below
    buf.write_u64::<LittleEndian>(0).unwrap();

    buf.write_u16::<LittleEndian>(forest.temporal_order() as u16)
        .unwrap();
    buf.write_u32::<LittleEndian>(forest.trees().len() as u32)
        .unwrap();
    buf.write_u32::<LittleEndian>(forest.feature_dim() as u32)
        .unwrap();
    buf.write_u16::<LittleEndian>(forest.num_labels() as u16)
        .unwrap();
    for name in forest.label_names() {
        write_string_u16(&mut buf, name)?;
    }
    let config = toml::to_string(forest.config())
        .map_err(|e| Error::Internal(format!("config serialization failed: {e}")))?;
    buf.write_u32::<LittleEndian>(config.len() as u32).unwrap();
    buf.extend_from_slice(config.as_bytes());

    for tree in forest.trees() {
        write_tree(&mut buf, tree, forest.num_labels());
    }

    let total = (buf.len() + 4) as u64;
    buf[6..14].copy_from_slice(&total.to_le_bytes());
    let crc = crc32fast::hash(&buf);
    buf.write_u32::<LittleEndian>(crc).unwrap();

    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

// ── Reading ──────────────────────────────────────────────────────────────

/// Byte cursor whose reads fail with `Truncated` instead of panicking.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(model_err(self.path, ModelError::Truncated));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(self.take(2)?.read_u16::<LittleEndian>().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(self.take(4)?.read_u32::<LittleEndian>().unwrap())
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(self.take(8)?.read_u64::<LittleEndian>().unwrap())
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(self.take(8)?.read_f64::<LittleEndian>().unwrap())
    }

    fn string_u16(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| model_err(self.path, ModelError::Malformed("non-UTF-8 string".into())))
    }

    fn malformed(&self, msg: impl Into<String>) -> Error {
        model_err(self.path, ModelError::Malformed(msg.into()))
    }
}

fn read_tree(r: &mut Reader, k: usize, num_labels: usize, dim: usize) -> Result<ForestTree> {
    let d = match r.u8()? {
        0 => None,
        d if (d as usize) <= k => Some(d as usize),
        d => return Err(r.malformed(format!("tree distance {d} exceeds temporal order {k}"))),
    };

    let node_count = r.u32()? as usize;
    if node_count == 0 {
        return Err(r.malformed("tree with no nodes"));
    }
    // first pass: logical ids and kinds, children resolved afterwards
    let mut ids = Vec::with_capacity(node_count);
    let mut raw = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let id: NodeId = r.u64()?;
        if let Some(&last) = ids.last() {
            if id <= last {
                return Err(r.malformed(format!("node ids not strictly increasing at {id}")));
            }
        }
        ids.push(id);
        match r.u8()? {
            0 => {
                let feature_index = r.u32()? as usize;
                if feature_index >= dim {
                    return Err(r.malformed(format!(
                        "split feature {feature_index} outside dimension {dim}"
                    )));
                }
                let threshold = r.f64()?;
                raw.push(Some(SplitParams {
                    feature_index,
                    threshold,
                }));
            }
            1 => raw.push(None),
            tag => return Err(r.malformed(format!("unknown node tag {tag}"))),
        }
    }
    if ids[0] != 0 {
        return Err(r.malformed("tree root missing"));
    }

    let slot_of = |id: NodeId| ids.binary_search(&id).ok();
    let mut nodes = Vec::with_capacity(node_count);
    let mut leaf_count = 0usize;
    for (i, split) in raw.into_iter().enumerate() {
        let id = ids[i];
        let kind = match split {
            Some(split) => {
                let left = slot_of(2 * id + 1)
                    .ok_or_else(|| r.malformed(format!("node {id} missing left child")))?;
                let right = slot_of(2 * id + 2)
                    .ok_or_else(|| r.malformed(format!("node {id} missing right child")))?;
                NodeKind::Internal { split, left, right }
            }
            None => {
                let leaf_id = leaf_count;
                leaf_count += 1;
                NodeKind::Leaf { leaf_id }
            }
        };
        nodes.push(TreeNode { id, kind });
    }

    let num_leaves = r.u32()? as usize;
    if num_leaves != leaf_count {
        return Err(r.malformed(format!(
            "declared {num_leaves} leaves but the node array holds {leaf_count}"
        )));
    }
    let mut class_dist = Vec::with_capacity(num_leaves);
    for _ in 0..num_leaves {
        let mut dist = Vec::with_capacity(num_labels);
        for _ in 0..num_labels {
            let p = r.f64()?;
            if !p.is_finite() {
                return Err(r.malformed("non-finite class probability"));
            }
            dist.push(p);
        }
        class_dist.push(dist);
    }

    let entry_count = r.u32()? as usize;
    let mut trans = std::collections::BTreeMap::new();
    for _ in 0..entry_count {
        let prev = r.u32()?;
        let cur = r.u32()?;
        if prev as usize >= num_leaves || cur as usize >= num_leaves {
            return Err(r.malformed(format!(
                "transition entry ({prev}, {cur}) outside {num_leaves} leaves"
            )));
        }
        let support = r.u32()?;
        let mut rows = Vec::with_capacity(num_labels);
        for _ in 0..num_labels {
            let mut row = Vec::with_capacity(num_labels);
            for _ in 0..num_labels {
                let p = r.f64()?;
                if !p.is_finite() {
                    return Err(r.malformed("non-finite transition probability"));
                }
                row.push(p);
            }
            rows.push(row);
        }
        if trans
            .insert((prev, cur), TransEntry { rows, support })
            .is_some()
        {
            return Err(r.malformed(format!("duplicate transition entry ({prev}, {cur})")));
        }
    }

    Ok(ForestTree {
        tree: TransitionTree::from_parts(nodes, dim, num_leaves),
        tables: LeafTables::from_parts(class_dist, trans),
        d,
    })
}

/// Loads a forest, verifying magic, version, length, and checksum before
/// parsing the body.
pub fn load_forest(path: impl AsRef<Path>) -> Result<TransitionForest> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| model_err(path, ModelError::Unreadable(e)))?;

    if buf.len() < 4 {
        return Err(model_err(path, ModelError::Truncated));
    }
    if &buf[..4] != MAGIC {
        return Err(model_err(path, ModelError::BadMagic));
    }
    let mut r = Reader {
        buf: &buf,
        pos: 4,
        path,
    };
    let version = r.u16()?;
    if version != VERSION {
        return Err(model_err(
            path,
            ModelError::UnsupportedVersion(version as u32),
        ));
    }
    let declared = r.u64()? as usize;
    if buf.len() < declared {
        return Err(model_err(path, ModelError::Truncated));
    }
    if buf.len() > declared {
        return Err(model_err(
            path,
            ModelError::Malformed("trailing bytes after model".into()),
        ));
    }
    let stored_crc = (&buf[buf.len() - 4..]).read_u32::<LittleEndian>().unwrap();
    if crc32fast::hash(&buf[..buf.len() - 4]) != stored_crc {
        return Err(model_err(path, ModelError::ChecksumMismatch));
    }

    let k = r.u16()? as usize;
    let num_trees = r.u32()? as usize;
    let feature_dim = r.u32()? as usize;
    let num_labels = r.u16()? as usize;
    if num_labels == 0 {
        return Err(r.malformed("empty label vocabulary"));
    }
    let mut label_names = Vec::with_capacity(num_labels);
    for _ in 0..num_labels {
        label_names.push(r.string_u16()?);
    }
    let config_len = r.u32()? as usize;
    let config_text = std::str::from_utf8(r.take(config_len)?)
        .map_err(|_| r.malformed("non-UTF-8 config echo"))?;
    let config: ForestConfig =
        toml::from_str(config_text).map_err(|e| r.malformed(format!("bad config echo: {e}")))?;
    if config.num_trees != num_trees || config.temporal_order != k {
        return Err(r.malformed("config echo disagrees with header"));
    }

    let mut trees = Vec::with_capacity(num_trees);
    for _ in 0..num_trees {
        trees.push(read_tree(&mut r, k, num_labels, feature_dim)?);
    }
    if r.pos != buf.len() - 4 {
        return Err(r.malformed("unexpected bytes after the last tree"));
    }
    if k >= 1 {
        for d in 1..=k {
            if !trees.iter().any(|t| t.d == Some(d)) {
                return Err(r.malformed(format!("no tree trained at temporal distance {d}")));
            }
        }
    }

    Ok(TransitionForest::from_parts(
        trees,
        label_names,
        feature_dim,
        config,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, opposed_cycle_kernels, SynthConfig};
    use crate::features::{FeatureSpec, Representation};
    use crate::forest::train_forest;
    use crate::tree::TreeTrainConfig;

    fn trained() -> TransitionForest {
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
        let ds = generate_synthetic(&config, 7).unwrap();
        let cfg = ForestConfig {
            num_trees: 4,
            temporal_order: 2,
            tree: TreeTrainConfig {
                max_depth: 3,
                min_samples_split: 8,
                n_candidate_features: 3,
                n_candidate_thresholds: 4,
                min_transition_support: 5,
                ..TreeTrainConfig::default()
            },
            seed: 5,
            features: FeatureSpec {
                representation: Representation::Jp,
                ..FeatureSpec::default()
            },
            bootstrap: true,
        };
        train_forest(&ds, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_structurally_identical() {
        let forest = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tfor");
        save_forest(&forest, &path).unwrap();
        let loaded = load_forest(&path).unwrap();
        assert_eq!(forest, loaded);
    }

    #[test]
    fn saving_twice_yields_identical_bytes() {
        let forest = trained();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.tfor");
        let b = dir.path().join("b.tfor");
        save_forest(&forest, &a).unwrap();
        save_forest(&forest, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn corruption_fails_the_checksum() {
        let forest = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tfor");
        save_forest(&forest, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() * 3 / 4;
        bytes[mid] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_forest(&path),
            Err(Error::Model {
                kind: ModelError::ChecksumMismatch,
                ..
            })
        ));
    }

    #[test]
    fn truncation_is_reported_as_truncation() {
        let forest = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tfor");
        save_forest(&forest, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_forest(&path),
            Err(Error::Model {
                kind: ModelError::Truncated,
                ..
            })
        ));
    }

    #[test]
    fn wrong_magic_and_missing_file_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tfor");
        std::fs::write(&path, b"not a model at all").unwrap();
        assert!(matches!(
            load_forest(&path),
            Err(Error::Model {
                kind: ModelError::BadMagic,
                ..
            })
        ));
        assert!(matches!(
            load_forest(dir.path().join("absent.tfor")),
            Err(Error::Model {
                kind: ModelError::Unreadable(_),
                ..
            })
        ));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let forest = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tfor");
        save_forest(&forest, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..6].copy_from_slice(&9u16.to_le_bytes());
        let crc = crc32fast::hash(&bytes[..bytes.len() - 4]);
        let len = bytes.len();
        bytes[len - 4..].copy_from_slice(&crc.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_forest(&path),
            Err(Error::Model { kind: ModelError::UnsupportedVersion(v), .. }) if v == 9
        ));
    }
}
