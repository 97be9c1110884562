//! End-to-end checks of the command-line interface: subcommand wiring,
//! output files, stdout formats, and the exit-code contract (0 success,
//! 1 usage, 2 data, 3 internal).

use std::path::Path;
use std::process::{Command, Output};

fn tforest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tforest"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn expect_code(out: &Output, code: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{what}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn arg(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

#[test]
fn synth_train_recognize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("data").join("manifest.csv");
    let model = dir.path().join("model.tfm");

    let out = tforest(&[
        "synth",
        "--out",
        arg(&manifest),
        "--labels",
        "2",
        "--joints",
        "3",
        "--sequences-per-label",
        "6",
        "--frames",
        "16",
        "--prototypes",
        "3",
        "--seed",
        "5",
    ]);
    expect_code(&out, 0, "synth should succeed");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("wrote 12 sequences"),
        "synth summary: {stdout}"
    );
    assert!(manifest.exists());

    let out = tforest(&[
        "train",
        "--manifest",
        arg(&manifest),
        "--out",
        arg(&model),
        "--trees",
        "4",
        "--temporal-order",
        "1",
        "--depth",
        "4",
        "--seed",
        "9",
    ]);
    expect_code(&out, 0, "train should succeed");
    assert!(model.exists(), "train should write the model file");

    let per_frame = dir.path().join("frames.csv");
    let out = tforest(&[
        "recognize",
        "--model",
        arg(&model),
        "--manifest",
        arg(&manifest),
        "--per-frame",
        arg(&per_frame),
    ]);
    expect_code(&out, 0, "recognize should succeed");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let labeled_lines = stdout.lines().filter(|l| l.contains('\t')).count();
    assert_eq!(
        labeled_lines, 12,
        "one labeled line per sequence:\n{stdout}"
    );
    assert!(
        stdout.contains("accuracy"),
        "labeled input should report accuracy:\n{stdout}"
    );

    let frames = std::fs::read_to_string(&per_frame).unwrap();
    let mut lines = frames.lines();
    assert_eq!(lines.next(), Some("sequence_id,t,label0,label1"));
    assert_eq!(lines.count(), 12 * 16, "one row per frame");
}

#[test]
fn synth_stitch_train_detect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("streams").join("manifest.csv");
    let model = dir.path().join("model.tfm");
    let events = dir.path().join("events.csv");

    let out = tforest(&[
        "synth",
        "--out",
        arg(&manifest),
        "--labels",
        "3",
        "--joints",
        "3",
        "--sequences-per-label",
        "6",
        "--frames",
        "30",
        "--prototypes",
        "3",
        "--stitch",
        "3",
        "--actions-per-stream",
        "3",
        "--action-len",
        "20",
        "--gap-len",
        "20",
        "--seed",
        "3",
    ]);
    expect_code(&out, 0, "stitched synth should succeed");

    let out = tforest(&[
        "train",
        "--manifest",
        arg(&manifest),
        "--out",
        arg(&model),
        "--trees",
        "6",
        "--temporal-order",
        "1",
        "--depth",
        "5",
        "--seed",
        "4",
    ]);
    expect_code(&out, 0, "train on streams should succeed");

    let out = tforest(&[
        "detect",
        "--model",
        arg(&model),
        "--manifest",
        arg(&manifest),
        "--events",
        arg(&events),
        "--beta-start",
        "0.6",
        "--beta-end",
        "0.55",
        "--min-event-len",
        "3",
    ]);
    expect_code(&out, 0, "detect should succeed");
    let csv = std::fs::read_to_string(&events).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("sequence_id,label_name,start,end,mean_score")
    );
    assert!(
        lines.count() > 0,
        "short streams should still yield events:\n{csv}"
    );

    // the same artifacts with impossible thresholds are a usage error
    let out = tforest(&[
        "detect",
        "--model",
        arg(&model),
        "--manifest",
        arg(&manifest),
        "--events",
        arg(&events),
        "--beta-start",
        "1.5",
    ]);
    expect_code(&out, 1, "out-of-range threshold should be a usage error");
}

#[test]
fn eval_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        r#"
protocol = "synthetic-benchmark"
seeds = [3, 4]

[dataset.synthetic]
num_joints = 3
sequences_per_label = 8
frames_per_sequence = 12
pose_prototypes = 3

[forest]
num_trees = 4
temporal_order = 1

[forest.tree]
max_depth = 3
min_samples_split = 6

[benchmark]
k_values = [0, 1]
"#,
    )
    .unwrap();

    let mut contents = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = tforest(&["eval", "--config", arg(&config), "--out", arg(&out_dir)]);
        expect_code(&out, 0, "eval should succeed");
        let per_run = std::fs::read(out_dir.join("benchmark_per_run.csv")).unwrap();
        let summary = std::fs::read(out_dir.join("accuracy_vs_k.csv")).unwrap();
        contents.push((per_run, summary));
    }
    assert_eq!(
        contents[0], contents[1],
        "report files must not vary between reruns"
    );

    let summary = String::from_utf8(contents[0].1.clone()).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("k,mean_accuracy,std_accuracy"));
    assert_eq!(
        lines.count(),
        2,
        "one summary row per requested temporal order"
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    let out = tforest(&["--help"]);
    expect_code(&out, 0, "--help is not an error");

    let out = tforest(&[]);
    expect_code(&out, 1, "a missing subcommand is a usage error");

    let out = tforest(&["train", "--bogus-flag"]);
    expect_code(&out, 1, "an unknown flag is a usage error");

    let dir = tempfile::tempdir().unwrap();
    let out = tforest(&[
        "train",
        "--manifest",
        arg(&dir.path().join("missing.csv")),
        "--out",
        arg(&dir.path().join("model.tfm")),
    ]);
    expect_code(&out, 2, "an unreadable manifest is a data error");

    let bad_config = dir.path().join("bad.toml");
    std::fs::write(&bad_config, "protocol = \"recognition\"\nbogus_key = 1\n").unwrap();
    let out = tforest(&[
        "eval",
        "--config",
        arg(&bad_config),
        "--out",
        arg(&dir.path().join("out")),
    ]);
    expect_code(&out, 1, "an invalid config is a usage error");

    let out = tforest(&[
        "eval",
        "--config",
        arg(&dir.path().join("nope.toml")),
        "--out",
        arg(&dir.path().join("out")),
    ]);
    expect_code(&out, 2, "a missing config file is a data error");
}
