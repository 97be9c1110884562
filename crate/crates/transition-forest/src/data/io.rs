//! Plain-text dataset storage.
//!
//! A dataset on disk is a manifest file with one `<relative_path>,<label>`
//! line per sequence (label `-` for per-frame-labeled data), a `labels.txt`
//! sidecar next to it (one label name per line, line number = label id),
//! and one comma-separated file per sequence: a `J=<joint_count>` header
//! line followed by `<frame_label_id>,<x0>,<y0>,<z0>,...` frame lines.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::data::{Dataset, Joint, Sequence, SkeletonFrame};
use crate::error::{Error, Result};

/// Name of the label-vocabulary sidecar, resolved next to the manifest.
const LABELS_FILE: &str = "labels.txt";

/// Loads a dataset from a manifest file. Sequence paths are resolved
/// relative to the manifest's directory; sequences keep manifest order and
/// take their id from the file stem.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let label_names = read_labels(&dir.join(LABELS_FILE))?;
    let has_background = label_names
        .last()
        .is_some_and(|n| n.eq_ignore_ascii_case("background"));

    let manifest = fs::File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut sequences = Vec::new();
    let mut joint_count: Option<usize> = None;
    for (idx, line) in BufReader::new(manifest).lines().enumerate() {
        let line = line.map_err(|e| Error::io(manifest_path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (rel_path, label_field) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(manifest_path, lineno, "expected `<path>,<label_or_->`"))?;
        let sequence_label = match label_field.trim() {
            "-" => None,
            text => Some(parse_label_id(
                text,
                label_names.len(),
                manifest_path,
                lineno,
            )?),
        };
        let seq_path = dir.join(rel_path.trim());
        let seq = read_sequence(
            &seq_path,
            sequence_label,
            label_names.len(),
            &mut joint_count,
        )?;
        sequences.push(seq);
    }

    let dataset = Dataset {
        sequences,
        label_names,
        joint_count: joint_count.unwrap_or(0),
        has_background,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes a dataset under the manifest path: the manifest itself, a
/// `labels.txt` sidecar, and one `<id>.csv` per sequence, all in the
/// manifest's directory. Loading the result reproduces the dataset exactly.
pub fn save_dataset(dataset: &Dataset, manifest_path: &Path) -> Result<()> {
    dataset.validate()?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut seen = std::collections::BTreeSet::new();
    for seq in &dataset.sequences {
        if seq.id.contains([',', '/', '\\', '\n']) {
            return Err(Error::Validation(format!(
                "sequence id '{}' cannot name a file",
                seq.id
            )));
        }
        if !seen.insert(&seq.id) {
            return Err(Error::Validation(format!(
                "duplicate sequence id '{}'",
                seq.id
            )));
        }
    }
    for name in &dataset.label_names {
        if name.contains('\n') {
            return Err(Error::Validation(format!(
                "label name {name:?} contains newline"
            )));
        }
    }

    let labels_path = dir.join(LABELS_FILE);
    let mut out = String::new();
    for name in &dataset.label_names {
        out.push_str(name);
        out.push('\n');
    }
    fs::write(&labels_path, out).map_err(|e| Error::io(&labels_path, e))?;

    let mut manifest = String::new();
    for seq in &dataset.sequences {
        let file_name = format!("{}.csv", seq.id);
        match seq.sequence_label {
            Some(l) => manifest.push_str(&format!("{file_name},{l}\n")),
            None => manifest.push_str(&format!("{file_name},-\n")),
        }
        write_sequence(seq, dataset.joint_count, &dir.join(&file_name))?;
    }
    fs::write(manifest_path, manifest).map_err(|e| Error::io(manifest_path, e))?;
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut names = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let name = line.trim();
        if !name.is_empty() {
            names.push(name.to_string());
        }
    }
    if names.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: no label names",
            path.display()
        )));
    }
    Ok(names)
}

fn parse_label_id(text: &str, num_labels: usize, file: &Path, lineno: usize) -> Result<usize> {
    let id: usize = text
        .parse()
        .map_err(|_| Error::parse(file, lineno, format!("invalid label id {text:?}")))?;
    if id >= num_labels {
        return Err(Error::parse(
            file,
            lineno,
            format!("unknown label id {id} (vocabulary has {num_labels})"),
        ));
    }
    Ok(id)
}

fn read_sequence(
    path: &PathBuf,
    sequence_label: Option<usize>,
    num_labels: usize,
    joint_count: &mut Option<usize>,
) -> Result<Sequence> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty sequence file"))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let j: usize = header
        .trim()
        .strip_prefix("J=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| {
            Error::parse(
                path,
                1,
                format!("expected `J=<joint_count>`, got {header:?}"),
            )
        })?;
    match *joint_count {
        None => *joint_count = Some(j),
        Some(expected) if expected != j => {
            return Err(Error::parse(
                path,
                1,
                format!("inconsistent joint count {j} (dataset uses {expected})"),
            ));
        }
        Some(_) => {}
    }

    let mut frames = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = line.split(',');
        let label = parse_label_id(
            fields.next().expect("split yields at least one field"),
            num_labels,
            path,
            lineno,
        )?;
        if let Some(expected) = sequence_label {
            if label != expected {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("frame label {label} disagrees with sequence label {expected}"),
                ));
            }
        }
        let coords: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("invalid coordinate {f:?}")))
            })
            .collect::<Result<_>>()?;
        if coords.len() != 3 * j {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "inconsistent joint count: {} coordinates for {j} joints (want {})",
                    coords.len(),
                    3 * j
                ),
            ));
        }
        let joints: Vec<Joint> = coords
            .chunks_exact(3)
            .map(|c| Joint::new(c[0], c[1], c[2]))
            .collect();
        if !joints.iter().all(Joint::is_finite) {
            return Err(Error::parse(path, lineno, "non-finite coordinate"));
        }
        frames.push(SkeletonFrame {
            joints,
            label,
            time_index: frames.len(),
        });
    }

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Sequence {
        id,
        frames,
        sequence_label,
    })
}

fn write_sequence(seq: &Sequence, joint_count: usize, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "J={joint_count}").map_err(|e| Error::io(path, e))?;
    for frame in &seq.frames {
        write!(w, "{}", frame.label).map_err(|e| Error::io(path, e))?;
        for p in &frame.joints {
            // `{}` on f64 prints the shortest digits that parse back to the
            // same value, so save → load is exact.
            write!(w, ",{},{},{}", p.x, p.y, p.z).map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn loads_two_sequences_three_labels() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "labels.txt", "wave\npunch\nthrow\n");
        write(tmp.path(), "a.csv", "J=2\n0,0,0,0,1,1,1\n0,0.5,0,0,1,1,2\n");
        write(tmp.path(), "b.csv", "J=2\n2,0,0,0,1,1,1\n");
        let manifest = write(tmp.path(), "manifest.txt", "a.csv,0\nb.csv,2\n");

        let ds = load_dataset(&manifest).unwrap();
        assert_eq!(ds.sequences.len(), 2);
        assert_eq!(ds.label_names.len(), 3);
        assert_eq!(ds.joint_count, 2);
        assert!(!ds.has_background);
        assert_eq!(ds.sequences[0].id, "a");
        assert_eq!(ds.sequences[0].sequence_label, Some(0));
        assert_eq!(ds.sequences[1].frames[0].label, 2);
    }

    #[test]
    fn rejects_frame_with_wrong_joint_count() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "labels.txt", "a\n");
        // second frame has one joint instead of two
        write(tmp.path(), "s.csv", "J=2\n0,0,0,0,1,1,1\n0,1,2,3\n");
        let manifest = write(tmp.path(), "manifest.txt", "s.csv,0\n");

        let err = load_dataset(&manifest).unwrap_err().to_string();
        assert!(err.contains("inconsistent joint count"), "{err}");
        assert!(err.contains("s.csv:3"), "{err}");
    }

    #[test]
    fn rejects_unknown_label_id() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "labels.txt", "a\nb\n");
        write(tmp.path(), "s.csv", "J=1\n5,0,0,0\n");
        let manifest = write(tmp.path(), "manifest.txt", "s.csv,-\n");

        let err = load_dataset(&manifest).unwrap_err().to_string();
        assert!(err.contains("unknown label id 5"), "{err}");
    }

    #[test]
    fn missing_sequence_file_names_the_path() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "labels.txt", "a\n");
        let manifest = write(tmp.path(), "manifest.txt", "ghost.csv,0\n");

        let err = load_dataset(&manifest).unwrap_err().to_string();
        assert!(err.contains("ghost.csv"), "{err}");
    }

    #[test]
    fn save_then_load_is_identity() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = Dataset {
            sequences: vec![
                Sequence {
                    id: "first".into(),
                    frames: vec![
                        SkeletonFrame {
                            joints: vec![
                                Joint::new(0.1, -2.25, 1e-7),
                                Joint::new(3.0, 0.125, -0.5),
                            ],
                            label: 1,
                            time_index: 0,
                        },
                        SkeletonFrame {
                            joints: vec![
                                Joint::new(0.30000000000000004, 2.0, 0.0),
                                Joint::new(1.0, 1.0, 1.0),
                            ],
                            label: 1,
                            time_index: 1,
                        },
                    ],
                    sequence_label: Some(1),
                },
                Sequence {
                    id: "second".into(),
                    frames: vec![SkeletonFrame {
                        joints: vec![Joint::new(5.5, 0.0, -3.125), Joint::new(0.0, 0.0, 0.0)],
                        label: 0,
                        time_index: 0,
                    }],
                    sequence_label: None,
                },
            ],
            label_names: vec!["idle".into(), "jump".into()],
            joint_count: 2,
            has_background: false,
        };

        let manifest = tmp.path().join("manifest.txt");
        save_dataset(&ds, &manifest).unwrap();
        let reloaded = load_dataset(&manifest).unwrap();
        assert_eq!(ds, reloaded);
    }

    #[test]
    fn detection_manifest_with_background_vocabulary() {
        // Layout mirroring a long-stream detection corpus: 59 per-frame
        // labeled sequences, 10 action classes plus background as the last
        // label id.
        let tmp = tempfile::tempdir().unwrap();
        let mut labels = String::new();
        for i in 0..10 {
            labels.push_str(&format!("action{i}\n"));
        }
        labels.push_str("background\n");
        write(tmp.path(), "labels.txt", &labels);

        let mut manifest_text = String::new();
        let mut expected_frames = 0usize;
        for s in 0..59 {
            let n_frames = 3 + (s % 4);
            let mut body = String::from("J=1\n");
            for t in 0..n_frames {
                // alternate action frames with background frames
                let label = if t % 2 == 0 { s % 10 } else { 10 };
                body.push_str(&format!("{label},{t},{s},0\n"));
            }
            write(tmp.path(), &format!("seq{s:02}.csv"), &body);
            manifest_text.push_str(&format!("seq{s:02}.csv,-\n"));
            expected_frames += n_frames;
        }
        let manifest = write(tmp.path(), "manifest.txt", &manifest_text);

        let ds = load_dataset(&manifest).unwrap();
        assert!(ds.has_background);
        assert_eq!(ds.background_label(), Some(10));
        assert_eq!(ds.sequences.len(), 59);

        // cross-check frame totals against a raw line count of the files
        let mut raw_lines = 0usize;
        for s in 0..59 {
            let text = fs::read_to_string(tmp.path().join(format!("seq{s:02}.csv"))).unwrap();
            raw_lines += text.lines().count() - 1; // minus the J= header
        }
        assert_eq!(expected_frames, raw_lines);
        assert_eq!(ds.total_frames(), raw_lines);
        // per-frame labels preserved: first sequence starts action0, background, ...
        assert_eq!(ds.sequences[0].frames[0].label, 0);
        assert_eq!(ds.sequences[0].frames[1].label, 10);
        assert_eq!(ds.sequences[0].sequence_label, None);
    }
}
