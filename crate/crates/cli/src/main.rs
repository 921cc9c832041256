//! The `rfscan` command-line tool.
//!
//! Exit codes: 0 on success, 1 when inputs fail validation (bad arguments,
//! malformed files, failed dataset checks), 2 on I/O errors.

use anyhow::anyhow;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rfscan_cli::bench::{bench, BenchModule, BenchReport};
use rfscan_cli::frame::{write_frame, FrameError, FrameMessage};
use rfscan_cli::stream::{
    run_stream, FileSource, FrameSink, QueuePolicy, StreamConfig, StreamError, VecSource,
};
use rfscan_core::dataset::{
    augment_brightness, augment_collide, augment_length, augment_move, auto_label,
    build_dataset, extract_prototype, load_manifest, metadata_for, read_annotations,
    read_recording_with_metadata, split_dataset, validate_dataset, write_annotations,
    write_iq, write_metadata, AugmentCanvas, CollectingMethod, DatasetError, ImageKind,
    MetadataContext, ScenarioConfig,
};
use rfscan_core::detector::{
    format_detections, kmeans_anchors, read_detections, write_detections, BaselineDetector,
    Detection, DetectorError,
};
use rfscan_core::emission::{
    add_awgn, combine_recordings, synthesize_emission, EmissionClass, EmissionError,
    IqRecording, SnrBucket,
};
use rfscan_core::evaluator::{evaluate, EvalReport, DEFAULT_IOU_THRESHOLDS};
use rfscan_core::imgio::{load_gray, load_rgb, save_gray, save_rgb, ImageIoError};
use rfscan_core::spectral::{
    render_gray, render_rgb, MappingConfig, NoiseFloorRef, SpectralError,
};
use rfscan_core::{
    Annotation, CompressionConfig, EmissionSpec, FrameGeometry, PipelineConfig,
};
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

// ---------------------------------------------------------------------------
// Error handling: every failure is either a validation problem (exit 1) or
// an I/O problem (exit 2).

#[derive(Debug)]
enum CliError {
    Validation(anyhow::Error),
    Io(anyhow::Error),
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(anyhow!(msg.into()))
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.into())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        CliError::Validation(e.into())
    }
}

impl From<EmissionError> for CliError {
    fn from(e: EmissionError) -> Self {
        CliError::Validation(e.into())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_) => CliError::Io(e.into()),
            _ => CliError::Validation(e.into()),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::Io(_) => CliError::Io(e.into()),
            _ => CliError::Validation(e.into()),
        }
    }
}

impl From<ImageIoError> for CliError {
    fn from(e: ImageIoError) -> Self {
        match e {
            ImageIoError::Io(_) => CliError::Io(e.into()),
            _ => CliError::Validation(e.into()),
        }
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Io(_) => CliError::Io(e.into()),
            _ => CliError::Validation(e.into()),
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Io(_) => CliError::Io(e.into()),
            _ => CliError::Validation(e.into()),
        }
    }
}

// ---------------------------------------------------------------------------
// Argument surface.

#[derive(Parser)]
#[command(
    name = "rfscan",
    version,
    about = "Wideband RF spectrogram toolkit: synthesis, rendering, datasets, detection, evaluation, streaming"
)]
struct Cli {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// FFT length: frequency bins per image column count.
    #[arg(long, global = true, default_value_t = 512)]
    fft_size: usize,
    /// Output image height in rows.
    #[arg(long, global = true, default_value_t = 512)]
    rows: usize,
    /// First-stage compression factor (FFT rows averaged per group).
    #[arg(long, global = true, default_value_t = 3)]
    m1: usize,
    /// Second-stage compression factor (stage-1 rows folded per pixel row).
    #[arg(long, global = true, default_value_t = 4)]
    m2: usize,
    /// Bottom of the amplitude window, dB above the noise floor.
    #[arg(long, global = true, default_value_t = 0.0, allow_hyphen_values = true)]
    a_min: f64,
    /// Top of the amplitude window, dB above the noise floor.
    #[arg(long, global = true, default_value_t = 50.0, allow_hyphen_values = true)]
    a_max: f64,
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let cfg = PipelineConfig {
            fft_size: self.fft_size,
            image_rows: self.rows,
            mapping: MappingConfig::new(self.a_min, self.a_max)?,
            compression: CompressionConfig {
                m1: self.m1,
                m2: self.m2,
            },
            noise_floor: NoiseFloorRef::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize emissions (plus optional noise) into an I/Q recording.
    Synth(SynthArgs),
    /// Mix several I/Q recordings into one, merging their ground truth.
    Combine(CombineArgs),
    /// Render one image frame from an I/Q recording.
    Render(RenderArgs),
    /// Build, split or check synthetic datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Re-compose labeled emissions into new training images.
    Augment(AugmentArgs),
    /// Cluster annotation boxes into anchor shapes.
    Anchors(AnchorsArgs),
    /// Run the baseline detector over images.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Run the two-stage streaming pipeline over a file or generator.
    Stream(StreamArgs),
    /// Measure stage throughput on synthetic input.
    Bench(BenchArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Io(e)) => {
            eprintln!("I/O error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let args = cli.pipeline;
    match cli.command {
        Command::Synth(a) => cmd_synth(&args, a),
        Command::Combine(a) => cmd_combine(&args, a),
        Command::Render(a) => cmd_render(&args, a),
        Command::Dataset(c) => match c {
            DatasetCmd::Build(a) => cmd_dataset_build(&args, a),
            DatasetCmd::Split(a) => cmd_dataset_split(&args, a),
            DatasetCmd::Validate(a) => cmd_dataset_validate(a),
        },
        Command::Augment(a) => cmd_augment(&args, a),
        Command::Anchors(a) => cmd_anchors(&args, a),
        Command::Detect(a) => cmd_detect(&args, a),
        Command::Eval(a) => cmd_eval(a),
        Command::Stream(a) => cmd_stream(&args, a),
        Command::Bench(a) => cmd_bench(&args, a),
    }
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
struct SynthArgs {
    /// Output I/Q file; a .json metadata sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Sample rate in Hz.
    #[arg(long, default_value_t = 100e6)]
    rate: f64,
    /// Absolute center frequency recorded in the metadata, Hz.
    #[arg(long, default_value_t = 2.44e9)]
    center_hz: f64,
    /// Emission class (single-emission mode).
    #[arg(long)]
    class: Option<EmissionClass>,
    /// Center offset from the capture center, Hz.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset_hz: f64,
    /// Per-occupied-bin SNR over the noise floor, dB.
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    snr_db: f64,
    /// Burst start time, seconds.
    #[arg(long, default_value_t = 0.0)]
    start_s: f64,
    /// Burst duration, seconds.
    #[arg(long, default_value_t = 1e-3)]
    duration_s: f64,
    /// Override the class's nominal bandwidth, Hz.
    #[arg(long)]
    bandwidth_hz: Option<f64>,
    /// JSON file holding an array of emission specs (scene mode).
    #[arg(long, conflicts_with = "class")]
    scene: Option<PathBuf>,
    /// Add white noise at this per-sample power, dB.
    #[arg(long, allow_hyphen_values = true)]
    noise_db: Option<f64>,
    /// Total recording length, seconds. Defaults to one grayscale frame;
    /// emissions running past it are never truncated.
    #[arg(long)]
    total_s: Option<f64>,
}

fn cmd_synth(args: &PipelineArgs, a: SynthArgs) -> Result<(), CliError> {
    let specs: Vec<EmissionSpec> = if let Some(scene) = &a.scene {
        let text = std::fs::read_to_string(scene)?;
        serde_json::from_str(&text)?
    } else if let Some(class) = a.class {
        vec![EmissionSpec {
            class,
            center_offset_hz: a.offset_hz,
            start_s: a.start_s,
            duration_s: a.duration_s,
            snr_db: a.snr_db,
            bandwidth_hz: a.bandwidth_hz,
        }]
    } else if a.noise_db.is_some() {
        vec![]
    } else {
        return Err(validation(
            "nothing to synthesize: pass --class, --scene or --noise-db",
        ));
    };

    let mut rec = if specs.is_empty() {
        let n = (a.duration_s * a.rate).round() as usize;
        IqRecording {
            samples: vec![num_complex::Complex32::new(0.0, 0.0); n],
            sample_rate_hz: a.rate,
            noise_power_db: f64::NEG_INFINITY,
            ground_truth: vec![],
        }
    } else {
        let parts: Result<Vec<_>, _> = specs
            .iter()
            .enumerate()
            .map(|(i, s)| synthesize_emission(s, a.rate, args.seed.wrapping_add(i as u64)))
            .collect();
        combine_recordings(&parts?)?
    };
    // A recording shorter than the renderer's window is useless
    // downstream, so pad to a full frame (or the requested length).
    let total_s = match a.total_s {
        Some(t) => t,
        None => FrameGeometry::gray(a.rate, &args.pipeline()?).time_span_s(),
    };
    let want = (total_s * a.rate).round() as usize;
    if rec.samples.len() < want {
        rec.samples.resize(want, num_complex::Complex32::new(0.0, 0.0));
    }
    if let Some(noise_db) = a.noise_db {
        rec = add_awgn(&rec, noise_db, args.seed ^ 0x6E6F_6973);
    }

    write_recording(&rec, &a.out, a.center_hz, CollectingMethod::RfManipulation)?;
    println!(
        "wrote {} samples ({:.3} ms, {} emissions) to {}",
        rec.samples.len(),
        rec.duration_s() * 1e3,
        rec.ground_truth.len(),
        a.out.display()
    );
    Ok(())
}

fn write_recording(
    rec: &IqRecording,
    out: &Path,
    center_hz: f64,
    method: CollectingMethod,
) -> Result<(), CliError> {
    write_iq(out, &rec.samples)?;
    let ctx = MetadataContext {
        file_name: out
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        center_frequency_hz: center_hz,
        collecting_method: method,
        date: None,
    };
    write_metadata(&out.with_extension("json"), &metadata_for(rec, &ctx))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// combine

#[derive(Args)]
struct CombineArgs {
    /// Input .iq files; each needs its .json sidecar.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Center frequency for the output metadata; defaults to the first
    /// input's.
    #[arg(long)]
    center_hz: Option<f64>,
}

fn cmd_combine(_args: &PipelineArgs, a: CombineArgs) -> Result<(), CliError> {
    let mut recs = Vec::new();
    let mut center = a.center_hz;
    for input in &a.inputs {
        let (rec, meta) = read_recording_with_metadata(input, &input.with_extension("json"))?;
        center.get_or_insert(meta.center_frequency_hz);
        recs.push(rec);
    }
    let combined = combine_recordings(&recs)?;
    write_recording(
        &combined,
        &a.out,
        center.unwrap_or(0.0),
        CollectingMethod::RfManipulation,
    )?;
    println!(
        "combined {} recordings into {} ({} samples, {} emissions)",
        a.inputs.len(),
        a.out.display(),
        combined.samples.len(),
        combined.ground_truth.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// render

#[derive(Args)]
struct RenderArgs {
    /// Input .iq file; its .json sidecar supplies rate and ground truth
    /// when present.
    #[arg(long)]
    iq: PathBuf,
    /// Output image: .pgm/.png for gray, .ppm/.png for rgb.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "gray")]
    kind: ImageKind,
    /// Sample rate when there is no metadata sidecar.
    #[arg(long)]
    rate: Option<f64>,
    /// Use a known per-sample noise power (dB) instead of estimating the
    /// floor from the frame itself.
    #[arg(long, allow_hyphen_values = true)]
    floor_db: Option<f64>,
    /// Also write ground-truth boxes for the rendered frame.
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn load_recording(iq: &Path, rate: Option<f64>) -> Result<IqRecording, CliError> {
    let sidecar = iq.with_extension("json");
    if sidecar.is_file() {
        let (rec, _) = read_recording_with_metadata(iq, &sidecar)?;
        Ok(rec)
    } else {
        let rate = rate.ok_or_else(|| {
            validation(format!(
                "{} has no metadata sidecar; pass --rate",
                iq.display()
            ))
        })?;
        Ok(rfscan_core::dataset::read_iq(iq, rate)?)
    }
}

fn cmd_render(args: &PipelineArgs, a: RenderArgs) -> Result<(), CliError> {
    let mut pipeline = args.pipeline()?;
    if let Some(floor) = a.floor_db {
        pipeline.noise_floor = NoiseFloorRef::SamplePowerDb(floor);
    }
    let rec = load_recording(&a.iq, a.rate)?;

    let geom = match a.kind {
        ImageKind::Gray => {
            let (img, geom) = render_gray(&rec, &pipeline)?;
            save_gray(&a.out, &img)?;
            geom
        }
        ImageKind::Rgb => {
            let (img, geom) = render_rgb(&rec, &pipeline)?;
            save_rgb(&a.out, &img)?;
            geom
        }
    };

    if let Some(labels) = &a.labels {
        let anns: Vec<Annotation> = rec
            .ground_truth
            .iter()
            .filter_map(|s| auto_label(s, &geom))
            .collect();
        write_annotations(labels, &anns)?;
        println!("wrote {} labels to {}", anns.len(), labels.display());
    }
    println!(
        "rendered {}x{} {} frame spanning {:.4} ms to {}",
        geom.fft_size,
        geom.image_rows,
        match a.kind {
            ImageKind::Gray => "gray",
            ImageKind::Rgb => "rgb",
        },
        geom.time_span_s() * 1e3,
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// dataset build | split | validate

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate a labeled synthetic dataset.
    Build(DatasetBuildArgs),
    /// Cut a dataset into train/val/test lists.
    Split(DatasetSplitArgs),
    /// Check that a dataset directory is complete and consistent.
    Validate(DatasetValidateArgs),
}

#[derive(Args)]
struct DatasetBuildArgs {
    /// Dataset root directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Scenario JSON file; flags below are ignored when it is given.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    images: usize,
    #[arg(long, default_value = "gray")]
    image_kind: ImageKind,
    /// Classes to cycle through, comma separated.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<EmissionClass>,
    /// Draw SNRs from a named bucket: low, mid or high.
    #[arg(long)]
    snr_bucket: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    snr_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    snr_max: Option<f64>,
    /// Fraction of images carrying a second, overlapping emission.
    #[arg(long, default_value_t = 0.0)]
    collision_fraction: f64,
    /// Also write raw I/Q recordings and metadata sidecars.
    #[arg(long)]
    write_recordings: bool,
    /// Write PNG images instead of PGM/PPM.
    #[arg(long)]
    png: bool,
    #[arg(long, default_value_t = 100e6)]
    rate: f64,
    #[arg(long, default_value_t = 2.44e9)]
    center_hz: f64,
}

fn parse_bucket(s: &str) -> Result<SnrBucket, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "low" => Ok(SnrBucket::Low),
        "mid" => Ok(SnrBucket::Mid),
        "high" => Ok(SnrBucket::High),
        other => Err(validation(format!("unknown SNR bucket '{other}'"))),
    }
}

fn cmd_dataset_build(args: &PipelineArgs, a: DatasetBuildArgs) -> Result<(), CliError> {
    let scenario = if let Some(path) = &a.scenario {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)?
    } else {
        let mut s = ScenarioConfig::new(a.images);
        s.seed = args.seed;
        s.image_kind = a.image_kind;
        if !a.classes.is_empty() {
            s.classes = a.classes.clone();
        }
        s.snr_bucket = a.snr_bucket.as_deref().map(parse_bucket).transpose()?;
        if a.snr_min.is_some() || a.snr_max.is_some() {
            let lo = a.snr_min.unwrap_or(5.0);
            let hi = a.snr_max.unwrap_or(40.0);
            s.snr_range_db = Some((lo, hi));
        }
        s.collision_fraction = a.collision_fraction;
        s.write_recordings = a.write_recordings;
        s.png = a.png;
        s.sample_rate_hz = a.rate;
        s.center_frequency_hz = a.center_hz;
        s
    };
    let pipeline = args.pipeline()?;
    let manifest = build_dataset(&scenario, &pipeline, &a.out)?;
    println!(
        "built {} images ({} recordings) under {}",
        manifest.pictures.len(),
        manifest.recordings.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct DatasetSplitArgs {
    /// Dataset root (must contain global.json).
    #[arg(long)]
    root: PathBuf,
    #[arg(long, default_value_t = 0.64)]
    train: f64,
    #[arg(long, default_value_t = 0.16)]
    val: f64,
    #[arg(long, default_value_t = 0.2)]
    test: f64,
}

fn cmd_dataset_split(args: &PipelineArgs, a: DatasetSplitArgs) -> Result<(), CliError> {
    let manifest = load_manifest(&a.root)?;
    let (train, val, test) =
        split_dataset(&manifest, (a.train, a.val, a.test), args.seed)?;
    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        let mut w = BufWriter::new(File::create(a.root.join(format!("{name}.txt")))?);
        for entry in part {
            let rel = entry.image.strip_prefix(&a.root).unwrap_or(&entry.image);
            writeln!(w, "{}", rel.display())?;
        }
    }
    println!(
        "split {} images into {}/{}/{} (train/val/test) under {}",
        manifest.pictures.len(),
        train.len(),
        val.len(),
        test.len(),
        a.root.display()
    );
    Ok(())
}

#[derive(Args)]
struct DatasetValidateArgs {
    #[arg(long)]
    root: PathBuf,
}

fn cmd_dataset_validate(a: DatasetValidateArgs) -> Result<(), CliError> {
    let manifest = load_manifest(&a.root)?;
    let report = validate_dataset(&manifest);
    println!(
        "{}: {} pictures, {} annotations, {} recordings",
        a.root.display(),
        report.pictures,
        report.annotations,
        report.recordings
    );
    if report.is_ok() {
        println!("ok");
        Ok(())
    } else {
        for err in &report.errors {
            eprintln!("  {err}");
        }
        Err(validation(format!(
            "{} problem(s) found",
            report.errors.len()
        )))
    }
}

// ---------------------------------------------------------------------------
// augment

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum AugmentOp {
    Move,
    Collide,
    Length,
    Brightness,
}

impl std::str::FromStr for AugmentOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "move" => Ok(AugmentOp::Move),
            "collide" => Ok(AugmentOp::Collide),
            "length" => Ok(AugmentOp::Length),
            "brightness" => Ok(AugmentOp::Brightness),
            other => Err(format!("unknown augmentation '{other}'")),
        }
    }
}

#[derive(Args)]
struct AugmentArgs {
    /// Source grayscale image.
    #[arg(long)]
    image: PathBuf,
    /// Annotations of the source image.
    #[arg(long)]
    labels: PathBuf,
    /// One of: move, collide, length, brightness.
    #[arg(long)]
    op: AugmentOp,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    out_labels: PathBuf,
    /// Index of the annotation to re-compose.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Collision partner annotation index; defaults to --index.
    #[arg(long)]
    with_index: Option<usize>,
    /// Horizontal shift in pixels (move: the emission; collide: the
    /// partner).
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    dx: i32,
    /// Vertical shift in pixels.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    dy: i32,
    /// New emission length in rows (length op).
    #[arg(long)]
    length_px: Option<usize>,
    /// Level change in dB (brightness op).
    #[arg(long, allow_hyphen_values = true)]
    delta_db: Option<f64>,
}

fn cmd_augment(args: &PipelineArgs, a: AugmentArgs) -> Result<(), CliError> {
    let img = load_gray(&a.image)?;
    let anns = read_annotations(&a.labels)?;
    let proto_at = |i: usize| -> Result<_, CliError> {
        let ann = anns.get(i).ok_or_else(|| {
            validation(format!(
                "annotation index {i} out of range ({} available)",
                anns.len()
            ))
        })?;
        Ok(extract_prototype(&img, ann))
    };
    let canvas = AugmentCanvas {
        width: img.width,
        height: img.height,
        mapping: MappingConfig::new(args.a_min, args.a_max)?,
        seed: args.seed,
    };

    let (out_img, out_anns) = match a.op {
        AugmentOp::Move => augment_move(&proto_at(a.index)?, &canvas, a.dx, a.dy),
        AugmentOp::Collide => {
            let first = proto_at(a.index)?;
            let second = proto_at(a.with_index.unwrap_or(a.index))?;
            augment_collide(&[(first, (0, 0)), (second, (a.dx, a.dy))], &canvas)
        }
        AugmentOp::Length => {
            let px = a
                .length_px
                .ok_or_else(|| validation("--length-px is required for the length op"))?;
            augment_length(&proto_at(a.index)?, &canvas, px)
        }
        AugmentOp::Brightness => {
            let db = a
                .delta_db
                .ok_or_else(|| validation("--delta-db is required for the brightness op"))?;
            augment_brightness(&proto_at(a.index)?, &canvas, db)
        }
    };

    save_gray(&a.out, &out_img)?;
    write_annotations(&a.out_labels, &out_anns)?;
    println!(
        "wrote {} with {} annotation(s)",
        a.out.display(),
        out_anns.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// anchors

#[derive(Args)]
struct AnchorsArgs {
    /// Dataset root to pull annotation boxes from.
    #[arg(long)]
    root: PathBuf,
    /// Number of anchor shapes.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_anchors(args: &PipelineArgs, a: AnchorsArgs) -> Result<(), CliError> {
    let manifest = load_manifest(&a.root)?;
    let mut boxes = Vec::new();
    for entry in &manifest.pictures {
        for ann in read_annotations(&entry.annotations)? {
            boxes.push((ann.bbox.width, ann.bbox.height));
        }
    }
    let anchors = kmeans_anchors(&boxes, a.k, args.seed)?;
    anchors.save(&a.out)?;
    println!(
        "clustered {} boxes into {} anchors -> {}",
        boxes.len(),
        a.k,
        a.out.display()
    );
    for (w, h) in &anchors.anchors {
        println!("  {w:.6} x {h:.6}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// detect

#[derive(Args)]
struct DetectArgs {
    /// Single image to scan.
    #[arg(long, conflicts_with = "root")]
    image: Option<PathBuf>,
    /// Dataset root: scans every picture into --out-dir.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Where dataset-mode detection files go (default <root>/detections).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output file in single-image mode (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sample rate for single images, Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// gray or rgb; defaults from the file extension in single mode.
    #[arg(long)]
    kind: Option<ImageKind>,
    #[arg(long, default_value_t = 12.0)]
    threshold_db: f64,
    #[arg(long, default_value_t = 12)]
    min_area: usize,
    #[arg(long, default_value_t = 12.0)]
    trim_db: f64,
    #[arg(long, default_value_t = 0.5)]
    nms_iou: f64,
}

fn detector_from(args: &PipelineArgs, a: &DetectArgs) -> Result<BaselineDetector, CliError> {
    Ok(BaselineDetector {
        mapping: MappingConfig::new(args.a_min, args.a_max)?,
        threshold_db: a.threshold_db,
        min_area_px: a.min_area,
        trim_db: a.trim_db,
        nms_iou: a.nms_iou,
    })
}

fn detect_one(
    path: &Path,
    kind: ImageKind,
    geom: &FrameGeometry,
    detector: &BaselineDetector,
) -> Result<Vec<Detection>, CliError> {
    Ok(match kind {
        ImageKind::Gray => detector.detect_gray(&load_gray(path)?, geom),
        ImageKind::Rgb => detector.detect_rgb(&load_rgb(path)?, geom),
    })
}

fn cmd_detect(args: &PipelineArgs, a: DetectArgs) -> Result<(), CliError> {
    let detector = detector_from(args, &a)?;

    if let Some(root) = &a.root {
        let manifest = load_manifest(root)?;
        let out_dir = a.out_dir.clone().unwrap_or_else(|| root.join("detections"));
        std::fs::create_dir_all(&out_dir)?;
        let geom = manifest.global.geometry();
        let kind = manifest.global.image_kind;
        let mut total = 0usize;
        for entry in &manifest.pictures {
            let dets = detect_one(&entry.image, kind, &geom, &detector)?;
            total += dets.len();
            let stem = entry
                .image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            write_detections(&out_dir.join(format!("{stem}.txt")), &dets)?;
        }
        println!(
            "{} detections over {} images -> {}",
            total,
            manifest.pictures.len(),
            out_dir.display()
        );
        return Ok(());
    }

    let image = a
        .image
        .clone()
        .ok_or_else(|| validation("pass --image or --root"))?;
    let rate = a
        .rate
        .ok_or_else(|| validation("--rate is required with --image"))?;
    let kind = a.kind.unwrap_or_else(|| {
        match image.extension().and_then(|e| e.to_str()) {
            Some("pgm") => ImageKind::Gray,
            _ => ImageKind::Rgb,
        }
    });
    let pipeline = args.pipeline()?;
    let geom = match kind {
        ImageKind::Gray => FrameGeometry::gray(rate, &pipeline),
        ImageKind::Rgb => FrameGeometry::rgb(rate, &pipeline),
    };
    let dets = detect_one(&image, kind, &geom, &detector)?;
    match &a.out {
        Some(path) => {
            write_detections(path, &dets)?;
            println!("{} detections -> {}", dets.len(), path.display());
        }
        None => print!("{}", format_detections(&dets)),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
struct EvalArgs {
    /// Dataset root holding images and ground-truth annotations.
    #[arg(long)]
    root: PathBuf,
    /// Directory of detection files named <image stem>.txt.
    #[arg(long)]
    detections: PathBuf,
    /// IoU thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    iou: Vec<f64>,
    /// Emit the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Also write the JSON report to a file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let manifest = load_manifest(&a.root)?;
    let thresholds: Vec<f64> = if a.iou.is_empty() {
        DEFAULT_IOU_THRESHOLDS.to_vec()
    } else {
        a.iou.clone()
    };

    let mut images: Vec<(Vec<Detection>, Vec<Annotation>)> = Vec::new();
    for entry in &manifest.pictures {
        let truths = read_annotations(&entry.annotations)?;
        let stem = entry
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let det_path = a.detections.join(format!("{stem}.txt"));
        let dets = if det_path.is_file() {
            read_detections(&det_path)?
        } else {
            Vec::new()
        };
        images.push((dets, truths));
    }

    let report: EvalReport = evaluate(&images, &thresholds);
    if let Some(out) = &a.out {
        std::fs::write(out, report.to_json())?;
    }
    if a.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// stream

#[derive(Args)]
struct StreamArgs {
    /// Input .iq file (10 MB of file = 1.25 M samples).
    #[arg(long, conflicts_with = "generate_s")]
    input: Option<PathBuf>,
    /// Generate this many seconds of synthetic noise instead of reading a
    /// file.
    #[arg(long)]
    generate_s: Option<f64>,
    /// Sample rate; files with a .json sidecar carry their own.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value = "gray")]
    kind: ImageKind,
    /// Frame queue depth between the stages.
    #[arg(long, default_value_t = 8)]
    capacity: usize,
    /// block (lossless backpressure), drop (shed newest) or fail.
    #[arg(long, default_value = "block")]
    policy: QueuePolicy,
    /// Skip detection in stage B.
    #[arg(long)]
    no_detect: bool,
    /// Append every encoded frame to this file.
    #[arg(long)]
    frames_out: Option<PathBuf>,
    /// Write detections as `<frame> <class> <x> <y> <w> <h> <conf>` lines.
    #[arg(long)]
    detections_out: Option<PathBuf>,
    /// Suppress per-frame progress lines.
    #[arg(long)]
    quiet: bool,
    /// Print the final statistics as JSON.
    #[arg(long)]
    json: bool,
}

struct CliSink {
    frames_out: Option<BufWriter<File>>,
    detections_out: Option<BufWriter<File>>,
    quiet: bool,
    error: Option<CliError>,
}

impl FrameSink for CliSink {
    fn on_frame(&mut self, msg: &FrameMessage, detections: &[Detection]) {
        if self.error.is_some() {
            return;
        }
        let result = (|| -> Result<(), CliError> {
            if let Some(w) = &mut self.frames_out {
                write_frame(w, msg)?;
            }
            if let Some(w) = &mut self.detections_out {
                for d in detections {
                    writeln!(
                        w,
                        "{} {} {:.6} {:.6} {:.6} {:.6} {:.6}",
                        msg.frame_index,
                        d.class.class_id(),
                        d.bbox.x_center,
                        d.bbox.y_center,
                        d.bbox.width,
                        d.bbox.height,
                        d.confidence
                    )?;
                }
            }
            if !self.quiet {
                println!(
                    "frame {:>5}  t0 {:>12} ns  {} detection(s)",
                    msg.frame_index,
                    msg.t0_ns,
                    detections.len()
                );
            }
            Ok(())
        })();
        if let Err(e) = result {
            self.error = Some(e);
        }
    }
}

fn cmd_stream(args: &PipelineArgs, a: StreamArgs) -> Result<(), CliError> {
    let pipeline = args.pipeline()?;
    let config = StreamConfig {
        pipeline: pipeline.clone(),
        image_kind: a.kind,
        queue_capacity: a.capacity,
        policy: a.policy,
        detect: !a.no_detect,
        detector: BaselineDetector {
            mapping: pipeline.mapping,
            ..BaselineDetector::default()
        },
    };
    let mut sink = CliSink {
        frames_out: a
            .frames_out
            .as_ref()
            .map(|p| File::create(p).map(BufWriter::new))
            .transpose()?,
        detections_out: a
            .detections_out
            .as_ref()
            .map(|p| File::create(p).map(BufWriter::new))
            .transpose()?,
        quiet: a.quiet,
        error: None,
    };

    let stats = if let Some(input) = &a.input {
        let sidecar = input.with_extension("json");
        let rate = if sidecar.is_file() {
            rfscan_core::dataset::read_metadata(&sidecar)?.sample_rate_hz
        } else {
            a.rate.ok_or_else(|| {
                validation(format!(
                    "{} has no metadata sidecar; pass --rate",
                    input.display()
                ))
            })?
        };
        run_stream(FileSource::open(input, rate)?, &config, &mut sink)?
    } else if let Some(seconds) = a.generate_s {
        let rate = a.rate.unwrap_or(100e6);
        if !(seconds > 0.0) {
            return Err(validation("--generate-s must be positive"));
        }
        let geom = match a.kind {
            ImageKind::Gray => FrameGeometry::gray(rate, &pipeline),
            ImageKind::Rgb => FrameGeometry::rgb(rate, &pipeline),
        };
        let frame = IqRecording {
            samples: vec![num_complex::Complex32::new(0.0, 0.0); geom.samples_per_image()],
            sample_rate_hz: rate,
            noise_power_db: f64::NEG_INFINITY,
            ground_truth: vec![],
        };
        let noisy = add_awgn(&frame, 0.0, args.seed ^ 0x7374_7265);
        let total = (seconds * rate).round() as u64;
        run_stream(VecSource::cycle(noisy.samples, rate, total), &config, &mut sink)?
    } else {
        return Err(validation("pass --input or --generate-s"));
    };

    if let Some(e) = sink.error {
        return Err(e);
    }
    if let Some(w) = &mut sink.frames_out {
        w.flush()?;
    }
    if let Some(w) = &mut sink.detections_out {
        w.flush()?;
    }

    let spf = pipeline.fft_size as u64
        * pipeline.image_rows as u64
        * match a.kind {
            ImageKind::Gray => 1,
            ImageKind::Rgb => pipeline.compression.rows_per_output() as u64,
        };
    if a.json {
        let j = json!({
            "samples_consumed": stats.samples_consumed,
            "frames_produced": stats.frames_produced,
            "frames_processed": stats.frames_processed,
            "frames_dropped": stats.frames_dropped,
            "detections": stats.detections,
            "queue_high_water": stats.queue_high_water,
            "stage_a_busy_s": stats.stage_a_busy_s,
            "stage_b_busy_s": stats.stage_b_busy_s,
            "wall_s": stats.wall_s,
            "stage_a_msamps": stats.stage_a_throughput_msamps(),
            "stage_b_msamps": stats.stage_b_throughput_msamps(spf),
            "end_to_end_msamps": stats.end_to_end_msamps(),
        });
        println!("{}", serde_json::to_string_pretty(&j)?);
    } else {
        println!(
            "frames: {} produced, {} processed, {} dropped; {} detections",
            stats.frames_produced,
            stats.frames_processed,
            stats.frames_dropped,
            stats.detections
        );
        println!(
            "queue high-water {}/{}; stage A {:.1} Msamps/s, stage B {:.1} Msamps/s, end-to-end {:.1} Msamps/s",
            stats.queue_high_water,
            a.capacity,
            stats.stage_a_throughput_msamps(),
            stats.stage_b_throughput_msamps(spf),
            stats.end_to_end_msamps()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench

#[derive(Args)]
struct BenchArgs {
    /// fft, compression, detection, end_to_end or all.
    #[arg(long, default_value = "all")]
    module: String,
    #[arg(long, default_value_t = 2.0)]
    duration_s: f64,
    #[arg(long)]
    json: bool,
}

fn cmd_bench(args: &PipelineArgs, a: BenchArgs) -> Result<(), CliError> {
    let pipeline = args.pipeline()?;
    let modules: Vec<BenchModule> = if a.module.eq_ignore_ascii_case("all") {
        vec![
            BenchModule::Fft,
            BenchModule::Compression,
            BenchModule::Detection,
            BenchModule::EndToEnd,
        ]
    } else {
        vec![a.module.parse().map_err(validation)?]
    };

    let reports: Vec<BenchReport> = modules
        .into_iter()
        .map(|m| bench(m, a.duration_s, &pipeline, args.seed))
        .collect();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        for r in &reports {
            println!(
                "{:<12} {:>12} samples in {:>6.2} s  ->  {:>9.2} Msamps/s",
                r.module.to_string(),
                r.samples_processed,
                r.elapsed_s,
                r.throughput_msamps
            );
        }
    }
    Ok(())
}
