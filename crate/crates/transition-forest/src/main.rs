//! `tforest` — train, run, and evaluate transition forests from the
//! command line.
//!
//! Subcommands: `train` (fit a forest from a dataset manifest and save
//! it), `recognize` (label whole sequences with a trained model),
//! `detect` (stream sequences through the online detector and write
//! events), `eval` (run a TOML-described experiment), `synth` (generate
//! a synthetic dataset), and `bench` (temporal-order sweep shortcut).
//!
//! Exit codes: 0 success; 1 usage error (bad flags or configuration);
//! 2 data error (unreadable, malformed, or inconsistent inputs);
//! 3 internal invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use transition_forest::data::{
    generate_synthetic, load_dataset, normalize_dataset, save_dataset, stitch_detection_streams,
    Dataset, SkeletonSpec,
};
use transition_forest::detect::{DetectorParams, OnlineDetector};
use transition_forest::error::Error;
use transition_forest::experiment::{
    load_experiment_config, run_experiment, BenchmarkConfig, DatasetSource, KernelFamily, Protocol,
    SyntheticSource,
};
use transition_forest::features::Representation;
use transition_forest::forest::{
    load_forest, save_forest, train_forest, ForestConfig, TransitionForest,
};
use transition_forest::inference::classify_sequence;
use transition_forest::metrics::{
    detection_metrics, events_from_frames, recognition_metrics, EventSpan,
};
use transition_forest::Result;

#[derive(Parser)]
#[command(
    name = "tforest",
    version,
    about = "Decision forests that learn temporal transitions for sequence \
             classification and online action detection"
)]
struct Cli {
    /// Seed override: replaces the seed of whatever the subcommand runs
    /// (training, generation, experiment seeds). Ignored by the purely
    /// deterministic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for training; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Increase log detail on stderr (-v progress, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest from a dataset manifest and save it as a .tfor file.
    Train(TrainArgs),
    /// Classify whole sequences with a trained model.
    Recognize(RecognizeArgs),
    /// Stream sequences through the online detector and write the events.
    Detect(DetectArgs),
    /// Run an experiment described by a TOML config file.
    Eval(EvalArgs),
    /// Generate a synthetic dataset and save it as a manifest.
    Synth(SynthArgs),
    /// Temporal-order sweep on synthetic dynamics data; shortcut for the
    /// synthetic-benchmark experiment protocol.
    Bench(BenchArgs),
}

/// `--features` choices, mirroring the library's representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeatureArg {
    Jp,
    Rjp,
    Mp,
    MpRjp,
}

impl From<FeatureArg> for Representation {
    fn from(arg: FeatureArg) -> Self {
        match arg {
            FeatureArg::Jp => Representation::Jp,
            FeatureArg::Rjp => Representation::Rjp,
            FeatureArg::Mp => Representation::Mp,
            FeatureArg::MpRjp => Representation::MpRjp,
        }
    }
}

/// Flags shared by every command that reads skeleton data: optional
/// canonicalization of each frame before feature extraction. Models know
/// nothing about normalization, so apply the same flags at training and
/// prediction time.
#[derive(Args, Debug)]
struct NormalizeArgs {
    /// Canonicalize skeletons (translation/scale/vertical-rotation
    /// invariant) using these joint roles: ROOT LEFT_HIP RIGHT_HIP.
    #[arg(long, num_args = 3, value_names = ["ROOT", "LEFT_HIP", "RIGHT_HIP"])]
    normalize: Option<Vec<usize>>,
}

impl NormalizeArgs {
    fn apply(&self, dataset: Dataset) -> Result<Dataset> {
        match &self.normalize {
            None => Ok(dataset),
            Some(roles) => {
                let spec = SkeletonSpec {
                    root: roles[0],
                    left_hip: roles[1],
                    right_hip: roles[2],
                };
                normalize_dataset(&dataset, &spec)
            }
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest to train on.
    #[arg(long)]
    manifest: PathBuf,
    /// Where the trained model is written.
    #[arg(long)]
    out: PathBuf,
    /// Forest configuration as TOML (same schema the model file echoes);
    /// the flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of trees in the ensemble.
    #[arg(long)]
    trees: Option<usize>,
    /// Temporal order k; 0 trains a plain random forest.
    #[arg(long)]
    temporal_order: Option<usize>,
    /// Maximum tree depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Frame representation.
    #[arg(long, value_enum)]
    features: Option<FeatureArg>,
    /// Frames stacked per feature vector; 1 disables stacking.
    #[arg(long)]
    window: Option<usize>,
    #[command(flatten)]
    normalize: NormalizeArgs,
}

#[derive(Args)]
struct RecognizeArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Manifest of sequences to classify.
    #[arg(long)]
    manifest: PathBuf,
    /// Write per-frame posteriors here as CSV.
    #[arg(long)]
    per_frame: Option<PathBuf>,
    /// Marginalize the transition factor over stored posteriors instead
    /// of conditioning on the previous argmax.
    #[arg(long)]
    soft: bool,
    #[command(flatten)]
    normalize: NormalizeArgs,
}

#[derive(Args)]
struct DetectArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Manifest of streams to run the detector over.
    #[arg(long)]
    manifest: PathBuf,
    /// Posterior a label must exceed to open an event.
    #[arg(long, default_value_t = 0.79)]
    beta_start: f64,
    /// Running mean below which the open event ends.
    #[arg(long, default_value_t = 0.16)]
    beta_end: f64,
    /// Drop events spanning fewer frames than this.
    #[arg(long, default_value_t = 1)]
    min_event_len: usize,
    /// Write detected events here as CSV.
    #[arg(long)]
    events: PathBuf,
    /// Also write per-frame posteriors here as CSV.
    #[arg(long)]
    per_frame: Option<PathBuf>,
    /// Marginalize the transition factor over stored posteriors.
    #[arg(long)]
    soft: bool,
    #[command(flatten)]
    normalize: NormalizeArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory the report files are written into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Manifest path to write; sequence files go next to it.
    #[arg(long)]
    out: PathBuf,
    /// Number of classes.
    #[arg(long, default_value_t = 2)]
    labels: usize,
    /// Joints per skeleton.
    #[arg(long, default_value_t = 5)]
    joints: usize,
    #[arg(long, default_value_t = 100)]
    sequences_per_label: usize,
    #[arg(long, default_value_t = 40)]
    frames: usize,
    /// Latent pose prototypes per label.
    #[arg(long, default_value_t = 5)]
    prototypes: usize,
    /// Isotropic noise added to every coordinate.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Draw every label's prototypes from one shared pool, so classes
    /// differ only in their dynamics.
    #[arg(long)]
    shared_pool: bool,
    /// Transition-kernel family.
    #[arg(long, value_enum, default_value_t = KernelArg::OpposedCycle)]
    kernels: KernelArg,
    /// Splice the sequences into this many detection streams (the last
    /// label becomes background filler between the actions).
    #[arg(long)]
    stitch: Option<usize>,
    /// Action segments per stitched stream.
    #[arg(long, default_value_t = 5)]
    actions_per_stream: usize,
    /// Frames per action segment.
    #[arg(long, default_value_t = 30)]
    action_len: usize,
    /// Frames of background between actions.
    #[arg(long, default_value_t = 25)]
    gap_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    OpposedCycle,
    Uniform,
}

impl From<KernelArg> for KernelFamily {
    fn from(arg: KernelArg) -> Self {
        match arg {
            KernelArg::OpposedCycle => KernelFamily::OpposedCycle,
            KernelArg::Uniform => KernelFamily::Uniform,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Directory the report files are written into.
    #[arg(long)]
    out: PathBuf,
    /// Temporal orders to compare.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    k_values: Vec<usize>,
    /// Trees per forest.
    #[arg(long, default_value_t = 20)]
    trees: usize,
    /// Seeds to average over.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version arrive here too; only real parse
            // failures are usage errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 1,
                Error::Internal(_) => 3,
                _ => 2,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train(args) => train(args, cli.seed),
        Command::Recognize(args) => recognize(args),
        Command::Detect(args) => detect(args),
        Command::Eval(args) => eval(args, cli.seed),
        Command::Synth(args) => synth(args, cli.seed),
        Command::Bench(args) => bench(args, cli.seed),
    }
}

fn train(args: TrainArgs, seed: Option<u64>) -> Result<()> {
    let mut config = match &args.config {
        None => ForestConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(trees) = args.trees {
        config.num_trees = trees;
    }
    if let Some(k) = args.temporal_order {
        config.temporal_order = k;
        if k == 0 {
            // a plain random forest has no transition pairs to split on
            config.tree.transition_node_prob = 0.0;
        }
    }
    if let Some(depth) = args.depth {
        config.tree.max_depth = depth;
    }
    if let Some(features) = args.features {
        config.features.representation = features.into();
    }
    if let Some(window) = args.window {
        config.features.window = window;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }

    let dataset = args.normalize.apply(load_dataset(&args.manifest)?)?;
    log::info!(
        "training on {} sequences ({} frames, {} labels)",
        dataset.sequences.len(),
        dataset.total_frames(),
        dataset.num_labels()
    );
    let started = Instant::now();
    let forest = train_forest(&dataset, &config)?;
    let elapsed = started.elapsed();
    save_forest(&forest, &args.out)?;
    println!(
        "trained {} trees (temporal order {}, feature dim {}) on {} sequences in {:.1}s → {}",
        forest.trees().len(),
        forest.temporal_order(),
        forest.feature_dim(),
        dataset.sequences.len(),
        elapsed.as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn recognize(args: RecognizeArgs) -> Result<()> {
    let forest = load_forest(&args.model)?;
    let dataset = args.normalize.apply(load_dataset(&args.manifest)?)?;
    check_vocabulary(&forest, &dataset)?;

    let mut per_frame = PerFrameWriter::create(args.per_frame.as_deref(), forest.label_names())?;
    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    for seq in &dataset.sequences {
        let features = forest.config().features.extract(seq)?;
        let (label, posteriors) = classify_sequence(&forest, &features, args.soft)?;
        println!("{}\t{}", seq.id, forest.label_names()[label]);
        predictions.push(label);
        if let Some(truth) = seq.sequence_label {
            truths.push(truth);
        }
        for p in &posteriors {
            per_frame.row(&seq.id, p.time_index, &p.probs)?;
        }
    }
    if truths.len() == predictions.len() && !truths.is_empty() {
        let report = recognition_metrics(&predictions, &truths, forest.num_labels())?;
        println!(
            "accuracy {:.4} over {} sequences",
            report.overall_accuracy,
            predictions.len()
        );
    }
    per_frame.finish()?;
    Ok(())
}

fn detect(args: DetectArgs) -> Result<()> {
    let forest = load_forest(&args.model)?;
    let dataset = args.normalize.apply(load_dataset(&args.manifest)?)?;
    check_vocabulary(&forest, &dataset)?;
    let params = DetectorParams {
        beta_start: args.beta_start,
        beta_end: args.beta_end,
        min_event_len: args.min_event_len,
    };
    params.validate()?;

    let mut per_frame = PerFrameWriter::create(args.per_frame.as_deref(), forest.label_names())?;
    let mut events_csv = String::from("sequence_id,label_name,start,end,mean_score\n");
    let mut pred_frames = Vec::new();
    let mut gt_frames = Vec::new();
    let mut all_events = Vec::new();
    let mut offset = 0usize;
    let started = Instant::now();
    for seq in &dataset.sequences {
        let features = forest.config().features.extract(seq)?;
        let mut detector = OnlineDetector::new(&forest, params.clone(), args.soft)?;
        let mut seq_events = Vec::new();
        for frame in &features.frames {
            let (posterior, event) = detector.push(&frame.vector)?;
            per_frame.row(&seq.id, posterior.time_index, &posterior.probs)?;
            pred_frames.push(posterior.argmax_label);
            gt_frames.push(frame.label);
            seq_events.extend(event);
        }
        seq_events.extend(detector.finish());
        for e in &seq_events {
            events_csv.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                csv_field(&seq.id),
                csv_field(&forest.label_names()[e.label]),
                e.start_frame,
                e.end_frame,
                e.mean_score
            ));
            all_events.push(EventSpan::new(
                e.label,
                e.start_frame + offset,
                e.end_frame + offset,
            ));
        }
        offset += features.frames.len();
    }
    let elapsed = started.elapsed();
    std::fs::write(&args.events, &events_csv).map_err(|e| Error::io(&args.events, e))?;
    per_frame.finish()?;
    println!(
        "{} events across {} sequences ({} frames in {:.2}s) → {}",
        all_events.len(),
        dataset.sequences.len(),
        gt_frames.len(),
        elapsed.as_secs_f64(),
        args.events.display()
    );
    // score against the per-frame labels when the data declares background
    if let Some(background) = dataset.background_label() {
        let gt_events = events_from_frames(&gt_frames, Some(background));
        let report = detection_metrics(
            &pred_frames,
            &gt_frames,
            &all_events,
            &gt_events,
            0.25,
            forest.num_labels(),
            Some(background),
            elapsed.as_secs_f64(),
        )?;
        println!(
            "frame F1 {:.4}, SL {:.4}, EL {:.4} against {} ground-truth events",
            report.overall_f1,
            report.sl,
            report.el,
            gt_events.len()
        );
    }
    Ok(())
}

fn eval(args: EvalArgs, seed: Option<u64>) -> Result<()> {
    let mut config = load_experiment_config(&args.config)?;
    if let Some(seed) = seed {
        config.seeds = vec![seed];
    }
    let outcome = run_experiment(&config, &args.out)?;
    println!("{}", outcome.headline);
    for file in &outcome.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn synth(args: SynthArgs, seed: Option<u64>) -> Result<()> {
    let source = SyntheticSource {
        num_labels: args.labels,
        num_joints: args.joints,
        sequences_per_label: args.sequences_per_label,
        frames_per_sequence: args.frames,
        pose_prototypes: args.prototypes,
        noise_sigma: args.noise,
        shared_pose_pool: args.shared_pool,
        kernels: args.kernels.into(),
    };
    let seed = seed.unwrap_or(0);
    let mut dataset = generate_synthetic(&source.to_synth_config(), seed)?;
    if let Some(streams) = args.stitch {
        dataset = stitch_detection_streams(
            &dataset,
            streams,
            args.actions_per_stream,
            args.action_len,
            args.gap_len,
            seed,
        )?;
    }
    save_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} sequences ({} frames, {} labels) → {}",
        dataset.sequences.len(),
        dataset.total_frames(),
        dataset.num_labels(),
        args.out.display()
    );
    Ok(())
}

fn bench(args: BenchArgs, seed: Option<u64>) -> Result<()> {
    let config = transition_forest::experiment::ExperimentConfig {
        protocol: Protocol::SyntheticBenchmark,
        seeds: seed.map(|s| vec![s]).unwrap_or(args.seeds),
        dataset: DatasetSource::default(),
        forest: ForestConfig {
            num_trees: args.trees,
            temporal_order: args.k_values.iter().copied().max().unwrap_or(1).max(1),
            ..ForestConfig::default()
        },
        split: Default::default(),
        detection: Default::default(),
        benchmark: BenchmarkConfig {
            k_values: args.k_values,
        },
    };
    let outcome = run_experiment(&config, &args.out)?;
    println!("{}", outcome.headline);
    for file in &outcome.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

/// A model only fits data speaking the same label vocabulary.
fn check_vocabulary(forest: &TransitionForest, dataset: &Dataset) -> Result<()> {
    if forest.label_names() != dataset.label_names {
        return Err(Error::Validation(format!(
            "model labels {:?} do not match dataset labels {:?}",
            forest.label_names(),
            dataset.label_names
        )));
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Streams `sequence_id,t,<one posterior column per label>` rows into an
/// optional CSV file.
struct PerFrameWriter {
    out: Option<(PathBuf, String)>,
}

impl PerFrameWriter {
    fn create(path: Option<&Path>, label_names: &[String]) -> Result<Self> {
        let out = path.map(|p| {
            let mut header = String::from("sequence_id,t");
            for name in label_names {
                header.push(',');
                header.push_str(&csv_field(name));
            }
            header.push('\n');
            (p.to_path_buf(), header)
        });
        Ok(PerFrameWriter { out })
    }

    fn row(&mut self, id: &str, t: usize, probs: &[f64]) -> Result<()> {
        if let Some((_, text)) = &mut self.out {
            text.push_str(&csv_field(id));
            text.push_str(&format!(",{t}"));
            for p in probs {
                text.push_str(&format!(",{p:.6}"));
            }
            text.push('\n');
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some((path, text)) = self.out {
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
