//! Config-driven experiment runs with deterministic report files.
//!
//! An experiment is described by a TOML file: where the data comes from
//! (a manifest on disk or a synthetic generator), how frames are
//! represented, the forest parameters, the evaluation protocol, and the
//! seeds to repeat it over. [`run_experiment`] executes the pipeline and
//! writes CSV reports into an output directory.
//!
//! Three protocols exist:
//!
//! * `recognition` — whole-sequence classification. Splits sequences
//!   into train/test per seed, trains a forest, labels the held-out
//!   sequences, and reports accuracy (per seed, mean ± std) plus the
//!   confusion matrix summed over seeds.
//! * `detection` — online event detection on streams labeled per frame.
//!   Reports frame-level F1 and start/end localization per seed with
//!   mean ± std.
//! * `synthetic-benchmark` — a temporal-order sweep: trains one forest
//!   per `k` in `benchmark.k_values` and reports held-out frame accuracy
//!   against `k`, the regime where static splits fail and transition
//!   splits carry the signal.
//!
//! Every report is a plain CSV directly loadable as line/bar plot data;
//! there is no interactive UI. All numbers written to disk are pure
//! functions of the config, so rerunning the same file reproduces every
//! report byte for byte. For that reason wall-clock inference timings
//! are logged but never written into report files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_dataset, opposed_cycle_kernels, stitch_detection_streams, Dataset,
    Label, SynthConfig,
};
use crate::detect::{DetectorParams, OnlineDetector};
use crate::error::{Error, Result};
use crate::forest::{train_forest, ForestConfig, TransitionForest};
use crate::inference::{classify_sequence, predict_frame, PredictionContext};
use crate::metrics::{
    detection_metrics, events_from_frames, recognition_metrics, DetectionReport, EventSpan,
};

/// What the experiment measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Recognition,
    Detection,
    SyntheticBenchmark,
}

/// Named transition-kernel families for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// Label 0 cycles forward through the prototypes, label 1 backward,
    /// any further labels move uniformly. With a shared pose pool the
    /// first two classes then differ *only* in their dynamics.
    OpposedCycle,
    /// Every label moves uniformly; classes differ by their pose pools
    /// alone (set `shared_pose_pool = false`, or nothing distinguishes
    /// them at all).
    Uniform,
}

/// Synthetic data source: a compact surface over the full generator.
/// Arbitrary hand-built kernels remain available through the library API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSource {
    pub num_labels: usize,
    pub num_joints: usize,
    pub sequences_per_label: usize,
    pub frames_per_sequence: usize,
    pub pose_prototypes: usize,
    pub noise_sigma: f64,
    pub shared_pose_pool: bool,
    pub kernels: KernelFamily,
}

impl Default for SyntheticSource {
    /// The dynamics-discrimination regime: two classes over one shared
    /// pose pool, distinguished only by opposed prototype cycles.
    fn default() -> Self {
        SyntheticSource {
            num_labels: 2,
            num_joints: 5,
            sequences_per_label: 100,
            frames_per_sequence: 40,
            pose_prototypes: 5,
            noise_sigma: 0.05,
            shared_pose_pool: true,
            kernels: KernelFamily::OpposedCycle,
        }
    }
}

impl SyntheticSource {
    /// Expands the named kernel family into a full generator config.
    pub fn to_synth_config(&self) -> SynthConfig {
        let p = self.pose_prototypes;
        let uniform = vec![vec![1.0 / p as f64; p]; p];
        let kernels = match self.kernels {
            KernelFamily::Uniform => vec![uniform; self.num_labels],
            KernelFamily::OpposedCycle => {
                let cycles = opposed_cycle_kernels(p);
                (0..self.num_labels)
                    .map(|l| cycles.get(l).unwrap_or(&uniform).clone())
                    .collect()
            }
        };
        SynthConfig {
            num_labels: self.num_labels,
            num_joints: self.num_joints,
            sequences_per_label: self.sequences_per_label,
            frames_per_sequence: self.frames_per_sequence,
            pose_centers_per_label: self.pose_prototypes,
            transition_kernels: kernels,
            noise_sigma: self.noise_sigma,
            shared_pose_pool: self.shared_pose_pool,
        }
    }
}

/// Splices generated sequences into detection streams (see
/// [`stitch_detection_streams`]); the source's last label provides the
/// background filler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchSpec {
    pub num_streams: usize,
    pub actions_per_stream: usize,
    pub action_len: usize,
    pub gap_len: usize,
}

impl Default for StitchSpec {
    fn default() -> Self {
        StitchSpec {
            num_streams: 10,
            actions_per_stream: 5,
            action_len: 30,
            gap_len: 25,
        }
    }
}

/// Where the sequences come from: a manifest on disk or the synthetic
/// generator — exactly one of the two.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSource {
    pub manifest: Option<PathBuf>,
    pub synthetic: Option<SyntheticSource>,
    /// When present, the loaded or generated sequences are spliced into
    /// background-separated streams before the protocol runs.
    pub stitch: Option<StitchSpec>,
}

/// Holdout evaluation: the fraction of each label's sequences set aside
/// as the test split, re-drawn per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub holdout_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            holdout_fraction: 0.3,
        }
    }
}

/// Detection-protocol knobs: thresholds for the event state machine plus
/// the localization tolerance used by scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub beta_start: f64,
    pub beta_end: f64,
    pub min_event_len: usize,
    /// Start/end localization tolerance as a fraction of each
    /// ground-truth event's length.
    pub tol_ratio: f64,
    /// Marginalize the transition factor over stored posteriors instead
    /// of conditioning on the previous argmax.
    pub soft: bool,
}

impl Default for DetectionSection {
    fn default() -> Self {
        let params = DetectorParams::default();
        DetectionSection {
            beta_start: params.beta_start,
            beta_end: params.beta_end,
            min_event_len: params.min_event_len,
            tol_ratio: 0.25,
            soft: false,
        }
    }
}

impl DetectionSection {
    fn detector_params(&self) -> DetectorParams {
        DetectorParams {
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            min_event_len: self.min_event_len,
        }
    }
}

/// Temporal-order sweep settings for the benchmark protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Temporal orders to compare; 0 is the plain random forest.
    pub k_values: Vec<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            k_values: vec![0, 1, 2, 3],
        }
    }
}

/// A full experiment description, usually deserialized from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    /// One complete train/evaluate run per seed; reports aggregate over
    /// them. The seed drives data generation, the split, and training.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config(
                "an experiment needs at least one seed".into(),
            ));
        }
        match (&self.dataset.manifest, &self.dataset.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "dataset gives both a manifest and a synthetic source; pick one".into(),
                ))
            }
            (None, None) if self.protocol != Protocol::SyntheticBenchmark => {
                return Err(Error::Config(
                    "dataset needs a manifest or a synthetic source".into(),
                ))
            }
            _ => {}
        }
        if !(self.split.holdout_fraction > 0.0 && self.split.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout_fraction must lie strictly between 0 and 1, got {}",
                self.split.holdout_fraction
            )));
        }
        if self.detection.tol_ratio.is_nan() || self.detection.tol_ratio < 0.0 {
            return Err(Error::Config(format!(
                "tol_ratio must be non-negative, got {}",
                self.detection.tol_ratio
            )));
        }
        self.detection.detector_params().validate()?;
        if self.protocol == Protocol::SyntheticBenchmark {
            if self.benchmark.k_values.is_empty() {
                return Err(Error::Config("benchmark.k_values must not be empty".into()));
            }
            if let Some(&k) = self
                .benchmark
                .k_values
                .iter()
                .find(|&&k| k > self.forest.num_trees)
            {
                return Err(Error::Config(format!(
                    "benchmark k {k} exceeds num_trees {}; every distance needs a tree",
                    self.forest.num_trees
                )));
            }
        }
        self.forest.validate()
    }
}

/// Reads and validates an experiment config file.
pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text)
}

/// What a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Report files written, in a fixed order.
    pub files: Vec<PathBuf>,
    /// One-line human summary of the headline numbers.
    pub headline: String,
}

// ── Deterministic seed derivation ────────────────────────────────────────

/// splitmix64 finalizer: decorrelates the per-purpose seeds derived from
/// one experiment seed without pulling in another rng.
fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SALT_DATA: u64 = 1;
const SALT_SPLIT: u64 = 2;
const SALT_TRAIN: u64 = 3;
const SALT_STITCH: u64 = 4;

// ── Splitting ────────────────────────────────────────────────────────────

/// Deterministic stratified holdout: shuffles each label's sequences with
/// the seed and sets aside `fraction` of them (at least one, never all)
/// as the test split. Sequences without a whole-sequence label — detection
/// streams — form one shared stratum. Returns `(train, test)`.
pub fn holdout_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "holdout fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    // group sequence indices by stratum, in first-appearance order
    let mut strata: Vec<(Option<Label>, Vec<usize>)> = Vec::new();
    for (i, seq) in dataset.sequences.iter().enumerate() {
        match strata.iter_mut().find(|(l, _)| *l == seq.sequence_label) {
            Some((_, idxs)) => idxs.push(i),
            None => strata.push((seq.sequence_label, vec![i])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; dataset.sequences.len()];
    for (_, idxs) in &mut strata {
        idxs.shuffle(&mut rng);
        let n = idxs.len();
        if n < 2 {
            continue; // a lone sequence stays in training
        }
        let n_test = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
        for &i in idxs.iter().take(n_test) {
            is_test[i] = true;
        }
    }
    let pick = |want_test: bool| Dataset {
        sequences: dataset
            .sequences
            .iter()
            .enumerate()
            .filter(|(i, _)| is_test[*i] == want_test)
            .map(|(_, s)| s.clone())
            .collect(),
        label_names: dataset.label_names.clone(),
        joint_count: dataset.joint_count,
        has_background: dataset.has_background,
    };
    let (train, test) = (pick(false), pick(true));
    if train.sequences.is_empty() || test.sequences.is_empty() {
        return Err(Error::Validation(format!(
            "cannot split {} sequences into non-empty train and test sets",
            dataset.sequences.len()
        )));
    }
    Ok((train, test))
}

// ── Shared evaluation helpers ────────────────────────────────────────────

/// Fraction of test frames whose posterior argmax equals the frame label,
/// streaming each sequence through a fresh context.
pub fn frame_accuracy(forest: &TransitionForest, test: &Dataset) -> Result<f64> {
    let spec = &forest.config().features;
    let mut correct = 0usize;
    let mut total = 0usize;
    for seq in &test.sequences {
        let features = spec.extract(seq)?;
        let mut ctx = PredictionContext::new(forest, false);
        for frame in &features.frames {
            let posterior = predict_frame(forest, &frame.vector, &mut ctx)?;
            correct += (posterior.argmax_label == frame.label) as usize;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no test frames to score".into()));
    }
    Ok(correct as f64 / total as f64)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ── Report files ─────────────────────────────────────────────────────────

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Fixed-precision float formatting so reports are byte-stable.
fn num(v: f64) -> String {
    format!("{v:.6}")
}

struct ReportWriter {
    out_dir: PathBuf,
    files: Vec<PathBuf>,
}

impl ReportWriter {
    fn new(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(ReportWriter {
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let path = self.out_dir.join(name);
        let mut text = String::with_capacity(rows.iter().map(|r| r.len() + 1).sum::<usize>() + 64);
        writeln!(text, "{header}").expect("string write");
        for row in rows {
            writeln!(text, "{row}").expect("string write");
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

// ── Protocol runners ─────────────────────────────────────────────────────

fn materialize_dataset(config: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    let mut dataset = match (&config.dataset.manifest, &config.dataset.synthetic) {
        (Some(path), None) => load_dataset(path)?,
        (None, Some(source)) => {
            generate_synthetic(&source.to_synth_config(), mix(seed, SALT_DATA))?
        }
        (None, None) => generate_synthetic(
            &SyntheticSource::default().to_synth_config(),
            mix(seed, SALT_DATA),
        )?,
        (Some(_), Some(_)) => unreachable!("validate rejects double sources"),
    };
    if let Some(stitch) = &config.dataset.stitch {
        dataset = stitch_detection_streams(
            &dataset,
            stitch.num_streams,
            stitch.actions_per_stream,
            stitch.action_len,
            stitch.gap_len,
            mix(seed, SALT_STITCH),
        )?;
    }
    Ok(dataset)
}

fn train_on(
    config: &ExperimentConfig,
    train: &Dataset,
    seed: u64,
    k: Option<usize>,
) -> Result<TransitionForest> {
    let mut forest_config = config.forest.clone();
    forest_config.seed = mix(seed, SALT_TRAIN);
    if let Some(k) = k {
        forest_config.temporal_order = k;
        if k == 0 {
            // a plain random forest has no transition pairs to split on
            forest_config.tree.transition_node_prob = 0.0;
        }
    }
    train_forest(train, &forest_config)
}

fn run_recognition(config: &ExperimentConfig, writer: &mut ReportWriter) -> Result<String> {
    let mut accuracies = Vec::new();
    let mut per_seed_rows = Vec::new();
    let mut confusion_sum: Option<Vec<Vec<usize>>> = None;
    let mut label_names = Vec::new();
    for &seed in &config.seeds {
        let dataset = materialize_dataset(config, seed)?;
        let (train, test) = holdout_split(
            &dataset,
            config.split.holdout_fraction,
            mix(seed, SALT_SPLIT),
        )?;
        let forest = train_on(config, &train, seed, None)?;
        let mut predictions = Vec::with_capacity(test.sequences.len());
        let mut truths = Vec::with_capacity(test.sequences.len());
        for seq in &test.sequences {
            let truth = seq.sequence_label.ok_or_else(|| {
                Error::Validation(format!(
                    "recognition needs whole-sequence labels; '{}' has none",
                    seq.id
                ))
            })?;
            let features = forest.config().features.extract(seq)?;
            let (label, _) = classify_sequence(&forest, &features, false)?;
            predictions.push(label);
            truths.push(truth);
        }
        let report = recognition_metrics(&predictions, &truths, dataset.num_labels())?;
        log::info!("seed {seed}: accuracy {:.4}", report.overall_accuracy);
        accuracies.push(report.overall_accuracy);
        per_seed_rows.push(format!("{seed},{}", num(report.overall_accuracy)));
        match &mut confusion_sum {
            None => confusion_sum = Some(report.confusion),
            Some(sum) => {
                for (acc, row) in sum.iter_mut().zip(&report.confusion) {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
            }
        }
        label_names = dataset.label_names;
    }
    let (mean, std) = mean_std(&accuracies);
    writer.write("recognition_per_seed.csv", "seed,accuracy", &per_seed_rows)?;
    writer.write(
        "recognition_summary.csv",
        "metric,mean,std",
        &[format!("accuracy,{},{}", num(mean), num(std))],
    )?;
    let confusion = confusion_sum.expect("at least one seed ran");
    let header = std::iter::once("truth".to_string())
        .chain(label_names.iter().map(|n| csv_field(n)))
        .collect::<Vec<_>>()
        .join(",");
    let rows: Vec<String> = confusion
        .iter()
        .zip(&label_names)
        .map(|(row, name)| {
            std::iter::once(csv_field(name))
                .chain(row.iter().map(|c| c.to_string()))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    writer.write("confusion.csv", &header, &rows)?;
    Ok(format!(
        "recognition over {} seed(s): accuracy {:.4} ± {:.4}",
        config.seeds.len(),
        mean,
        std
    ))
}

/// Streams every test sequence through a fresh detector and scores the
/// pooled frames and events on one shared timeline.
fn detect_over(
    forest: &TransitionForest,
    test: &Dataset,
    section: &DetectionSection,
) -> Result<DetectionReport> {
    let spec = &forest.config().features;
    let mut pred_frames = Vec::new();
    let mut gt_frames = Vec::new();
    let mut events: Vec<EventSpan> = Vec::new();
    let mut inference_time = 0.0;
    for seq in &test.sequences {
        let offset = gt_frames.len();
        let features = spec.extract(seq)?;
        let mut detector = OnlineDetector::new(forest, section.detector_params(), section.soft)?;
        let started = Instant::now();
        let mut seq_events = Vec::new();
        for frame in &features.frames {
            let (posterior, event) = detector.push(&frame.vector)?;
            pred_frames.push(posterior.argmax_label);
            gt_frames.push(frame.label);
            seq_events.extend(event);
        }
        seq_events.extend(detector.finish());
        inference_time += started.elapsed().as_secs_f64();
        events.extend(seq_events.iter().map(|e| {
            let span = EventSpan::from(e);
            EventSpan::new(span.label, span.start + offset, span.end + offset)
        }));
    }
    let gt_events = events_from_frames(&gt_frames, test.background_label());
    detection_metrics(
        &pred_frames,
        &gt_frames,
        &events,
        &gt_events,
        section.tol_ratio,
        test.num_labels(),
        test.background_label(),
        inference_time,
    )
}

fn run_detection(config: &ExperimentConfig, writer: &mut ReportWriter) -> Result<String> {
    let mut f1s = Vec::new();
    let mut sls = Vec::new();
    let mut els = Vec::new();
    let mut per_seed_rows = Vec::new();
    let mut per_class_sums: Option<Vec<f64>> = None;
    let mut label_names = Vec::new();
    for &seed in &config.seeds {
        let dataset = materialize_dataset(config, seed)?;
        if dataset.background_label().is_none() {
            return Err(Error::Validation(
                "detection needs a dataset with a background class".into(),
            ));
        }
        let (train, test) = holdout_split(
            &dataset,
            config.split.holdout_fraction,
            mix(seed, SALT_SPLIT),
        )?;
        let forest = train_on(config, &train, seed, None)?;
        let report = detect_over(&forest, &test, &config.detection)?;
        log::info!(
            "seed {seed}: F1 {:.4}, SL {:.4}, EL {:.4}, inference {:.2}s",
            report.overall_f1,
            report.sl,
            report.el,
            report.inference_time_s
        );
        f1s.push(report.overall_f1);
        sls.push(report.sl);
        els.push(report.el);
        per_seed_rows.push(format!(
            "{seed},{},{},{}",
            num(report.overall_f1),
            num(report.sl),
            num(report.el)
        ));
        match &mut per_class_sums {
            None => per_class_sums = Some(report.per_class_f1),
            Some(sums) => {
                for (s, v) in sums.iter_mut().zip(&report.per_class_f1) {
                    *s += v;
                }
            }
        }
        label_names = dataset.label_names;
    }
    writer.write(
        "detection_per_seed.csv",
        "seed,overall_f1,sl,el",
        &per_seed_rows,
    )?;
    let (f1_mean, f1_std) = mean_std(&f1s);
    let (sl_mean, sl_std) = mean_std(&sls);
    let (el_mean, el_std) = mean_std(&els);
    writer.write(
        "detection_summary.csv",
        "metric,mean,std",
        &[
            format!("overall_f1,{},{}", num(f1_mean), num(f1_std)),
            format!("sl,{},{}", num(sl_mean), num(sl_std)),
            format!("el,{},{}", num(el_mean), num(el_std)),
        ],
    )?;
    let sums = per_class_sums.expect("at least one seed ran");
    let rows: Vec<String> = sums
        .iter()
        .zip(&label_names)
        .map(|(sum, name)| {
            format!(
                "{},{}",
                csv_field(name),
                num(sum / config.seeds.len() as f64)
            )
        })
        .collect();
    writer.write("detection_per_class_f1.csv", "label,mean_f1", &rows)?;
    Ok(format!(
        "detection over {} seed(s): F1 {:.4} ± {:.4}, SL {:.4}, EL {:.4}",
        config.seeds.len(),
        f1_mean,
        f1_std,
        sl_mean,
        el_mean
    ))
}

fn run_benchmark(config: &ExperimentConfig, writer: &mut ReportWriter) -> Result<String> {
    let mut per_run_rows = Vec::new();
    let mut table_rows = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for &k in &config.benchmark.k_values {
        let mut accuracies = Vec::new();
        for &seed in &config.seeds {
            let dataset = materialize_dataset(config, seed)?;
            let (train, test) = holdout_split(
                &dataset,
                config.split.holdout_fraction,
                mix(seed, SALT_SPLIT),
            )?;
            let forest = train_on(config, &train, seed, Some(k))?;
            let accuracy = frame_accuracy(&forest, &test)?;
            log::info!("k {k}, seed {seed}: frame accuracy {accuracy:.4}");
            accuracies.push(accuracy);
            per_run_rows.push(format!("{k},{seed},{}", num(accuracy)));
        }
        let (mean, std) = mean_std(&accuracies);
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((k, mean));
        }
        table_rows.push(format!("{k},{},{}", num(mean), num(std)));
    }
    writer.write(
        "benchmark_per_run.csv",
        "k,seed,frame_accuracy",
        &per_run_rows,
    )?;
    writer.write(
        "accuracy_vs_k.csv",
        "k,mean_accuracy,std_accuracy",
        &table_rows,
    )?;
    let (best_k, best_acc) = best.expect("k_values validated non-empty");
    Ok(format!(
        "benchmark over {} seed(s): best frame accuracy {:.4} at k = {}",
        config.seeds.len(),
        best_acc,
        best_k
    ))
}

/// Runs the configured experiment and writes its reports under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mut writer = ReportWriter::new(out_dir)?;
    let headline = match config.protocol {
        Protocol::Recognition => run_recognition(config, &mut writer)?,
        Protocol::Detection => run_detection(config, &mut writer)?,
        Protocol::SyntheticBenchmark => run_benchmark(config, &mut writer)?,
    };
    log::info!("{headline}");
    Ok(ExperimentOutcome {
        files: writer.files,
        headline,
    })
}
