//! The `lthrm` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lthrm_core::baseline::detect_baseline;
use lthrm_core::cluster::Method;
use lthrm_core::eval::{
    distance_histogram, fleiss_kappa, score_groups, LabeledRecording, MatchConfig, MatchMode,
};
use lthrm_core::signal::preprocess_recording;
use lthrm_core::synth::generate_recording;
use lthrm_core::{AnnotationSet, DetectionResult, ManometryRecording};

use crate::artifacts::{read_document, read_model, write_document, write_model, ClusteringDoc, MetricsDoc};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline::{
    cluster_events, cross_validate_folds, detect_ml_parallel, train_ml, BaselinePipeline, MlPipeline, MlTraining,
};
use crate::recording::{read_recording, recording_id, write_recording, RecordingFormat};
use crate::report::{metrics_table, write_report, ReportInputs};

#[derive(Debug, Parser)]
#[command(name = "lthrm", version, about = "Swallow detection and clustering for long-term manometry")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate labeled synthetic recordings.
    Synth(SynthArgs),
    /// Smooth, clip and scale raw recordings.
    Preprocess(PreprocessArgs),
    /// Threshold-and-peak detection.
    DetectBaseline(DetectBaselineArgs),
    /// Train the window classifier on annotated recordings.
    Train(TrainArgs),
    /// Sliding-window classifier detection.
    Detect(DetectArgs),
    /// Two-stage clustering of detected (or annotated) swallows.
    Cluster(ClusterArgs),
    /// Score detections, or cross-validate a detector.
    Eval(EvalArgs),
    /// Montages, histograms, metric tables and an HTML index.
    Report(ReportArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    recordings: Option<usize>,
    /// Seconds per recording.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    swallows: Option<usize>,
    /// Minimum spacing of swallow starts in seconds.
    #[arg(long)]
    min_gap: Option<f64>,
    /// Standard deviation of the additive noise in mmHg.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, value_enum, default_value = "mlm")]
    format: FileFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FileFormat {
    Mlm,
    Csv,
}

#[derive(Debug, Args)]
struct Inputs {
    /// Recording files (.mlm or .csv).
    #[arg(required = true)]
    recordings: Vec<PathBuf>,
    /// Directory holding `<id>.annotations.json` (default: next to each recording).
    #[arg(long)]
    annotations_dir: Option<PathBuf>,
    /// Smoothing window applied to raw inputs.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BaselineFlags {
    /// Binarization threshold in scaled units [0, 255].
    #[arg(long)]
    binarize_threshold: Option<f64>,
    #[arg(long)]
    peak_height: Option<f64>,
    #[arg(long)]
    peak_distance: Option<usize>,
}

#[derive(Debug, Args)]
struct DetectBaselineArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    baseline: BaselineFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    input_side: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    neg_per_pos: Option<usize>,
}

#[derive(Debug, Args)]
struct DetectFlags {
    #[arg(long)]
    stride: Option<usize>,
    /// Score smoothing width in samples.
    #[arg(long)]
    smooth_window: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    train: TrainFlags,
    /// Output model file (default `<out_dir>/model.lcm`).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    detect: DetectFlags,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Directory holding `<id>.detections.json`.
    #[arg(long, conflicts_with = "from_annotations")]
    detections_dir: Option<PathBuf>,
    /// Cluster the annotated starts instead of detections.
    #[arg(long)]
    from_annotations: bool,
    #[arg(long, value_enum)]
    method: Option<ClusterMethod>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ClusterMethod {
    Agglomerative,
    Kmeans,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Detector {
    Ml,
    Baseline,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    StartCentered,
    EventForward,
    EventAsymmetric,
}

impl From<Mode> for MatchMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::StartCentered => MatchMode::StartCentered,
            Mode::EventForward => MatchMode::EventForward,
            Mode::EventAsymmetric => MatchMode::EventAsymmetric,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Score existing `<id>.detections.json` files from this directory.
    #[arg(long, conflicts_with = "folds")]
    detections_dir: Option<PathBuf>,
    /// Patient-wise cross-validation with this many folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Detector trained and applied in cross-validation.
    #[arg(long, value_enum, default_value = "ml")]
    detector: Detector,
    /// Matching tolerance in samples; repeat to score several.
    #[arg(long)]
    d: Vec<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    bin_width: Option<usize>,
    /// Row label for tables (default: detector, d and mode).
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    detect: DetectFlags,
    #[command(flatten)]
    baseline: BaselineFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Recordings referenced by the clustering.
    recordings: Vec<PathBuf>,
    #[arg(long)]
    clustering: Option<PathBuf>,
    /// Metrics documents; repeat for several table rows.
    #[arg(long)]
    metrics: Vec<PathBuf>,
    /// CSV of per-subject category counts for Fleiss' kappa.
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Synth(a) => synth(cfg, a),
        Command::Preprocess(a) => preprocess(cfg, a),
        Command::DetectBaseline(a) => detect_baseline_cmd(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Detect(a) => detect(cfg, a),
        Command::Cluster(a) => cluster(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::Report(a) => report(cfg, a),
        Command::Config => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.paths.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."))
}

fn annotations_path(recording: &Path, dir: Option<&Path>) -> PathBuf {
    let name = format!("{}.annotations.json", recording_id(recording));
    match dir {
        Some(d) => d.join(name),
        None => recording.with_file_name(name),
    }
}

fn detections_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.detections.json"))
}

/// Reads a recording and preprocesses it unless it already is.
fn load_preprocessed(path: &Path, w: usize) -> Result<ManometryRecording> {
    let r = read_recording(path)?;
    if r.is_preprocessed() {
        return Ok(r);
    }
    preprocess_recording(&r, w).map_err(|e| Error::format(path, e.to_string()))
}

fn load_all(inputs: &Inputs, cfg: &RunConfig) -> Result<Vec<ManometryRecording>> {
    inputs.recordings.iter().map(|p| load_preprocessed(p, cfg.preprocess.w)).collect()
}

fn load_labeled(inputs: &Inputs, cfg: &RunConfig) -> Result<Vec<LabeledRecording>> {
    inputs
        .recordings
        .iter()
        .map(|p| {
            let recording = load_preprocessed(p, cfg.preprocess.w)?;
            let apath = annotations_path(p, inputs.annotations_dir.as_deref());
            let annotations: AnnotationSet = read_document(&apath)?;
            annotations
                .check_range(recording.samples())
                .map_err(|e| Error::format(&apath, e.to_string()))?;
            Ok(LabeledRecording {
                recording,
                annotations,
            })
        })
        .collect()
}

fn apply_train(cfg: &mut RunConfig, f: &TrainFlags) {
    set(&mut cfg.ml.input_side, f.input_side);
    set(&mut cfg.ml.epochs, f.epochs);
    set(&mut cfg.ml.learning_rate, f.learning_rate);
    set(&mut cfg.ml.batch_size, f.batch_size);
    set(&mut cfg.ml.neg_per_pos, f.neg_per_pos);
}

fn apply_detect(cfg: &mut RunConfig, f: &DetectFlags) {
    set(&mut cfg.ml.stride, f.stride);
    set(&mut cfg.ml.smooth_window, f.smooth_window);
    set(&mut cfg.ml.threshold, f.threshold);
}

fn apply_baseline(cfg: &mut RunConfig, f: &BaselineFlags) {
    set(&mut cfg.baseline.binarize_threshold, f.binarize_threshold);
    set(&mut cfg.baseline.peak_height, f.peak_height);
    set(&mut cfg.baseline.peak_distance, f.peak_distance);
}

fn ml_training(cfg: &RunConfig) -> MlTraining {
    MlTraining {
        meta: cfg.training_meta(),
        input_side: cfg.ml.input_side,
        neg_per_pos: cfg.ml.neg_per_pos,
    }
}

fn synth(mut cfg: RunConfig, a: SynthArgs) -> Result<()> {
    set(&mut cfg.synth.recordings, a.recordings);
    set(&mut cfg.synth.duration_s, a.duration);
    set(&mut cfg.synth.swallows, a.swallows);
    set(&mut cfg.synth.min_gap_s, a.min_gap);
    set(&mut cfg.synth.noise_std, a.noise);
    cfg.validate()?;
    let out = out_dir(&cfg, a.out);
    let ext = match a.format {
        FileFormat::Mlm => RecordingFormat::Mlm,
        FileFormat::Csv => RecordingFormat::Csv,
    }
    .extension();
    for i in 0..cfg.synth.recordings {
        let id = format!("rec_{i:03}");
        let s = generate_recording(&cfg.synth_config(i as u64), &id)?;
        let path = out.join(format!("{id}.{ext}"));
        write_recording(&s.recording, &path)?;
        write_document(&s.annotations, &annotations_path(&path, None))?;
        println!("{}: {} samples, {} swallows", path.display(), s.recording.samples(), s.annotations.len());
    }
    Ok(())
}

fn preprocess(mut cfg: RunConfig, a: PreprocessArgs) -> Result<()> {
    set(&mut cfg.preprocess.w, a.inputs.window);
    cfg.validate()?;
    let out = out_dir(&cfg, a.out);
    for path in &a.inputs.recordings {
        let r = read_recording(path)?;
        if r.is_preprocessed() {
            return Err(Error::format(path, "recording is already preprocessed"));
        }
        let p = preprocess_recording(&r, cfg.preprocess.w).map_err(|e| Error::format(path, e.to_string()))?;
        let target = out.join(format!("{}.mlm", r.patient_id));
        write_recording(&p, &target)?;
        let apath = annotations_path(path, a.inputs.annotations_dir.as_deref());
        if apath.exists() {
            let ann: AnnotationSet = read_document(&apath)?;
            ann.check_range(p.samples()).map_err(|e| Error::format(&apath, e.to_string()))?;
            write_document(&ann, &annotations_path(&target, None))?;
        }
        println!("{}: {} samples", target.display(), p.samples());
    }
    Ok(())
}

fn detect_baseline_cmd(mut cfg: RunConfig, a: DetectBaselineArgs) -> Result<()> {
    set(&mut cfg.preprocess.w, a.inputs.window);
    apply_baseline(&mut cfg, &a.baseline);
    cfg.validate()?;
    let out = out_dir(&cfg, a.out);
    let params = cfg.baseline_params();
    for (path, r) in a.inputs.recordings.iter().zip(load_all(&a.inputs, &cfg)?) {
        let det = detect_baseline(&r, &params).map_err(|e| Error::format(path, e.to_string()))?;
        write_detection(&out, &det)?;
    }
    Ok(())
}

fn write_detection(out: &Path, det: &DetectionResult) -> Result<()> {
    let path = detections_path(out, &det.recording_id);
    write_document(det, &path)?;
    println!("{}: {} events", path.display(), det.events.len());
    Ok(())
}

fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    set(&mut cfg.preprocess.w, a.inputs.window);
    apply_train(&mut cfg, &a.train);
    cfg.validate()?;
    let model_path = a.model.unwrap_or_else(|| out_dir(&cfg, None).join("model.lcm"));
    let data = load_labeled(&a.inputs, &cfg)?;
    let refs: Vec<&LabeledRecording> = data.iter().collect();
    let model = train_ml(&refs, &ml_training(&cfg))?;
    write_model(&model, &model_path)?;
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    println!(
        "{}: {} epochs, final loss {:.4}, training accuracy {:.4}",
        model_path.display(),
        model.epoch_losses.len(),
        last(&model.epoch_losses),
        last(&model.epoch_accuracy)
    );
    Ok(())
}

fn detect(mut cfg: RunConfig, a: DetectArgs) -> Result<()> {
    set(&mut cfg.preprocess.w, a.inputs.window);
    apply_detect(&mut cfg, &a.detect);
    cfg.validate()?;
    let model = read_model(&a.model)?;
    let out = out_dir(&cfg, a.out);
    let params = cfg.ml_params();
    for (path, r) in a.inputs.recordings.iter().zip(load_all(&a.inputs, &cfg)?) {
        let det = detect_ml_parallel(&model, &r, &params).map_err(|e| Error::format(path, e.to_string()))?;
        write_detection(&out, &det)?;
    }
    Ok(())
}

fn cluster(mut cfg: RunConfig, a: ClusterArgs) -> Result<()> {
    set(&mut cfg.preprocess.w, a.inputs.window);
    if let Some(m) = a.method {
        cfg.cluster.method = match m {
            ClusterMethod::Agglomerative => Method::Agglomerative,
            ClusterMethod::Kmeans => Method::Kmeans,
        };
    }
    set(&mut cfg.cluster.k_min, a.k_min);
    set(&mut cfg.cluster.k_max, a.k_max);
    cfg.validate()?;
    if a.detections_dir.is_none() && !a.from_annotations {
        return Err(Error::usage("cluster needs --detections-dir or --from-annotations"));
    }
    let out = out_dir(&cfg, a.out);
    let recordings = load_all(&a.inputs, &cfg)?;
    let mut events = Vec::new();
    for (path, r) in a.inputs.recordings.iter().zip(&recordings) {
        let starts = match &a.detections_dir {
            Some(dir) => {
                let det: DetectionResult = read_document(&detections_path(dir, &r.patient_id))?;
                det.starts()
            }
            None => {
                let ann: AnnotationSet = read_document(&annotations_path(path, a.inputs.annotations_dir.as_deref()))?;
                ann.starts().to_vec()
            }
        };
        events.extend(starts.into_iter().map(|s| (r, s)));
    }
    let ccfg = cfg.cluster_config();
    let (features, skipped, run) = cluster_events(&events, &ccfg).map_err(|e| Error::usage(format!("clustering: {e}")))?;
    for w in &run.result.warnings {
        log::warn!("{w}");
    }
    let doc = ClusteringDoc {
        config: ccfg,
        swallows: features.iter().map(|f| f.swallow_id.clone()).collect(),
        reduced: features.iter().map(|f| f.reduced.clone()).collect(),
        result: run.result,
        skipped,
    };
    write_document(&run.pca, &out.join("pca.json"))?;
    write_document(&doc, &out.join("clustering.json"))?;
    println!(
        "{}: {} swallows in {} clusters (stage-1 k = {}, {} skipped)",
        out.join("clustering.json").display(),
        doc.swallows.len(),
        doc.result.clusters.len(),
        doc.result.chosen_k,
        doc.skipped.len()
    );
    Ok(())
}

fn eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    set(&mut cfg.preprocess.w, a.inputs.window);
    set(&mut cfg.eval.folds, a.folds);
    if let Some(m) = a.mode {
        cfg.eval.mode = m.into();
    }
    set(&mut cfg.eval.bin_width, a.bin_width);
    apply_train(&mut cfg, &a.train);
    apply_detect(&mut cfg, &a.detect);
    apply_baseline(&mut cfg, &a.baseline);
    let ds = if a.d.is_empty() { vec![cfg.eval.d] } else { a.d.clone() };
    cfg.eval.d = ds[0];
    cfg.validate()?;
    for &d in &ds {
        MatchConfig::new(d, cfg.eval.mode).map_err(|e| Error::usage(e.to_string()))?;
    }
    let out = out_dir(&cfg, a.out);
    let data = load_labeled(&a.inputs, &cfg)?;

    // Detections grouped by fold; a single group when scoring existing files.
    let (detector, groups): (&str, Vec<Vec<(usize, DetectionResult)>>) = match (&a.detections_dir, a.folds) {
        (Some(dir), _) => {
            let group = data
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    read_document::<DetectionResult>(&detections_path(dir, &l.recording.patient_id)).map(|d| (i, d))
                })
                .collect::<Result<Vec<_>>>()?;
            ("detections", vec![group])
        }
        (None, Some(_)) => {
            let folds = match a.detector {
                Detector::Ml => {
                    let pipeline = MlPipeline {
                        training: ml_training(&cfg),
                        params: cfg.ml_params(),
                    };
                    cross_validate_folds(&data, cfg.eval.folds, &pipeline, cfg.seed)?
                }
                Detector::Baseline => {
                    cross_validate_folds(&data, cfg.eval.folds, &BaselinePipeline(cfg.baseline_params()), cfg.seed)?
                }
            };
            let groups = folds
                .into_iter()
                .map(|f| f.recordings.into_iter().zip(f.detections).collect())
                .collect();
            let name = match a.detector {
                Detector::Ml => "ml",
                Detector::Baseline => "baseline",
            };
            (name, groups)
        }
        (None, None) => return Err(Error::usage("eval needs --detections-dir or --folds")),
    };

    let mut docs = Vec::new();
    for &d in &ds {
        let mcfg = MatchConfig::new(d, cfg.eval.mode)?;
        let pairs: Vec<Vec<_>> = groups
            .iter()
            .map(|g| g.iter().map(|(i, det)| (&data[*i].annotations, det)).collect())
            .collect();
        let report = score_groups(&pairs, &mcfg)?;
        let histogram = distance_histogram(&report.distances, cfg.eval.bin_width)?;
        let label = match &a.label {
            Some(l) if ds.len() == 1 => l.clone(),
            Some(l) => format!("{l} d={d}"),
            None => format!("{detector} d={d} {}", mcfg.mode.name()),
        };
        let doc = MetricsDoc {
            label,
            report,
            histogram,
        };
        let path = out.join(format!("metrics_d{d}_{}.json", mcfg.mode.name()));
        write_document(&doc, &path)?;
        eprintln!("wrote {}", path.display());
        docs.push(doc);
    }
    print!("{}", metrics_table(&docs));
    Ok(())
}

/// Per-subject rating counts, one comma-separated row per subject.
fn read_ratings(path: &Path) -> Result<Vec<Vec<u32>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(',')
                .map(|f| f.trim().parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn report(mut cfg: RunConfig, a: ReportArgs) -> Result<()> {
    set(&mut cfg.preprocess.w, a.window);
    cfg.validate()?;
    let out = out_dir(&cfg, a.out);
    let clustering: Option<ClusteringDoc> = a.clustering.as_deref().map(read_document).transpose()?;
    let recordings: Vec<ManometryRecording> = a
        .recordings
        .iter()
        .map(|p| load_preprocessed(p, cfg.preprocess.w))
        .collect::<Result<_>>()?;
    let metrics = a.metrics.iter().map(|p| read_document(p)).collect::<Result<Vec<MetricsDoc>>>()?;
    let kappa = match &a.ratings {
        Some(p) => Some(fleiss_kappa(&read_ratings(p)?).map_err(|e| Error::format(p, e.to_string()))?),
        None => None,
    };
    let inputs = ReportInputs {
        clustering: clustering.as_ref(),
        recordings: recordings.iter().map(|r| (r.patient_id.clone(), r)).collect::<BTreeMap<_, _>>(),
        metrics,
        kappa,
    };
    let files = write_report(&out, &inputs)?;
    println!("{}: {} files", out.display(), files.len());
    Ok(())
}
