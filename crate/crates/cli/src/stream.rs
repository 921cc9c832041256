//! Two-stage streaming runtime.
//!
//! Stage A (producer thread) turns raw samples into rendered frames:
//! chunked FFT, optional compression, per-frame noise-floor estimation,
//! pixel mapping, frame encoding. Stage B (the calling thread) decodes
//! frames, optionally runs the baseline detector, and hands results to a
//! sink. A bounded channel connects the stages; the queue policy decides
//! what happens when the consumer falls behind.
//!
//! Frames are never reordered and, under the `Block` policy, never lost.
//! Per-stage busy time excludes waiting on the channel, so the reported
//! throughputs describe the stages themselves, not the slower partner.

use crate::frame::{decode_frame, encode_frame, FrameError, FrameMessage};
use crossbeam_channel::{bounded, TrySendError};
use num_complex::Complex32;
use rfscan_core::dataset::ImageKind;
use rfscan_core::detector::{BaselineDetector, Detection};
use rfscan_core::spectral::{
    energy_rows_to_rgb, Compressor, EnergyRow, FftStage, NoiseFloorEstimator, NoiseFloorRef,
    SpectralError,
};
use rfscan_core::{FrameGeometry, PipelineConfig};
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("invalid stream configuration: {0}")]
    BadConfig(String),
    #[error("queue overflowed after {produced} frames (capacity too small for the sink)")]
    QueueOverflow { produced: u64 },
    #[error("stage thread panicked")]
    WorkerPanicked,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What to do when the frame queue is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueuePolicy {
    /// Apply backpressure: the producer waits, no frame is lost.
    Block,
    /// Discard the newest frame and keep going; drops are counted.
    DropNewest,
    /// Treat overflow as an error and stop the stream.
    Fail,
}

impl std::str::FromStr for QueuePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "block" => Ok(QueuePolicy::Block),
            "drop" => Ok(QueuePolicy::DropNewest),
            "fail" => Ok(QueuePolicy::Fail),
            other => Err(format!("unknown queue policy '{other}'")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub pipeline: PipelineConfig,
    pub image_kind: ImageKind,
    pub queue_capacity: usize,
    pub policy: QueuePolicy,
    /// Run the baseline detector on every frame in stage B.
    pub detect: bool,
    pub detector: BaselineDetector,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            image_kind: ImageKind::Gray,
            queue_capacity: 8,
            policy: QueuePolicy::Block,
            detect: true,
            detector: BaselineDetector::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StreamStats {
    pub samples_consumed: u64,
    pub frames_produced: u64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    pub detections: u64,
    /// Highest queue occupancy seen at any enqueue.
    pub queue_high_water: usize,
    pub stage_a_busy_s: f64,
    pub stage_b_busy_s: f64,
    pub wall_s: f64,
}

impl StreamStats {
    pub fn stage_a_throughput_msamps(&self) -> f64 {
        if self.stage_a_busy_s <= 0.0 {
            return 0.0;
        }
        self.samples_consumed as f64 / self.stage_a_busy_s / 1e6
    }

    pub fn stage_b_throughput_msamps(&self, samples_per_frame: u64) -> f64 {
        if self.stage_b_busy_s <= 0.0 {
            return 0.0;
        }
        (self.frames_processed * samples_per_frame) as f64 / self.stage_b_busy_s / 1e6
    }

    pub fn end_to_end_msamps(&self) -> f64 {
        if self.wall_s <= 0.0 {
            return 0.0;
        }
        self.samples_consumed as f64 / self.wall_s / 1e6
    }
}

/// Anything that can feed complex baseband samples into the stream.
pub trait SampleSource: Send {
    fn sample_rate_hz(&self) -> f64;
    /// Fills as much of `buf` as possible; returns the count written.
    /// Zero means end of stream.
    fn fill(&mut self, buf: &mut [Complex32]) -> io::Result<usize>;
}

/// Reads interleaved little-endian f32 I/Q pairs from a file.
pub struct FileSource {
    reader: BufReader<File>,
    sample_rate_hz: f64,
}

impl FileSource {
    pub fn open(path: &Path, sample_rate_hz: f64) -> io::Result<Self> {
        Ok(Self {
            reader: BufReader::with_capacity(1 << 20, File::open(path)?),
            sample_rate_hz,
        })
    }
}

impl SampleSource for FileSource {
    fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    fn fill(&mut self, buf: &mut [Complex32]) -> io::Result<usize> {
        let mut bytes = vec![0u8; buf.len() * 8];
        let mut got = 0;
        while got < bytes.len() {
            let n = self.reader.read(&mut bytes[got..])?;
            if n == 0 {
                break;
            }
            got += n;
        }
        let samples = got / 8; // trailing partial pair is unusable
        for (i, s) in buf[..samples].iter_mut().enumerate() {
            let o = i * 8;
            *s = Complex32::new(
                f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()),
                f32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap()),
            );
        }
        Ok(samples)
    }
}

/// Replays an in-memory buffer, cycling until a sample budget runs out.
pub struct VecSource {
    samples: Vec<Complex32>,
    sample_rate_hz: f64,
    pos: usize,
    remaining: u64,
}

impl VecSource {
    /// Emits `samples` exactly once.
    pub fn once(samples: Vec<Complex32>, sample_rate_hz: f64) -> Self {
        let remaining = samples.len() as u64;
        Self {
            samples,
            sample_rate_hz,
            pos: 0,
            remaining,
        }
    }

    /// Cycles over `samples` until `total` samples have been emitted.
    pub fn cycle(samples: Vec<Complex32>, sample_rate_hz: f64, total: u64) -> Self {
        assert!(!samples.is_empty());
        Self {
            samples,
            sample_rate_hz,
            pos: 0,
            remaining: total,
        }
    }
}

impl SampleSource for VecSource {
    fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    fn fill(&mut self, buf: &mut [Complex32]) -> io::Result<usize> {
        let mut written = 0;
        while written < buf.len() && self.remaining > 0 {
            if self.pos == self.samples.len() {
                self.pos = 0;
            }
            let take = (buf.len() - written)
                .min(self.samples.len() - self.pos)
                .min(self.remaining as usize);
            buf[written..written + take]
                .copy_from_slice(&self.samples[self.pos..self.pos + take]);
            self.pos += take;
            written += take;
            self.remaining -= take as u64;
        }
        Ok(written)
    }
}

/// Receives every processed frame in stage B.
pub trait FrameSink {
    fn on_frame(&mut self, msg: &FrameMessage, detections: &[Detection]);
}

/// Discards everything; useful for throughput measurements.
pub struct NullSink;

impl FrameSink for NullSink {
    fn on_frame(&mut self, _msg: &FrameMessage, _detections: &[Detection]) {}
}

/// Keeps every frame and its detections in memory.
#[derive(Default)]
pub struct CollectSink {
    pub frames: Vec<FrameMessage>,
    pub detections: Vec<Vec<Detection>>,
}

impl FrameSink for CollectSink {
    fn on_frame(&mut self, msg: &FrameMessage, detections: &[Detection]) {
        self.frames.push(msg.clone());
        self.detections.push(detections.to_vec());
    }
}

/// Per-frame state for one image kind.
enum FrameBuilder {
    Gray {
        energies: Vec<f64>,
        rows_done: usize,
    },
    Rgb {
        compressor: Compressor,
        rows: Vec<EnergyRow>,
    },
}

impl FrameBuilder {
    fn new(cfg: &PipelineConfig, kind: ImageKind) -> Self {
        match kind {
            ImageKind::Gray => FrameBuilder::Gray {
                energies: Vec::with_capacity(cfg.fft_size * cfg.image_rows),
                rows_done: 0,
            },
            ImageKind::Rgb => FrameBuilder::Rgb {
                compressor: Compressor::new(cfg.fft_size, cfg.compression),
                rows: Vec::with_capacity(cfg.image_rows),
            },
        }
    }

    fn push_row(&mut self, row: &[Complex32]) -> Result<(), SpectralError> {
        match self {
            FrameBuilder::Gray { energies, rows_done } => {
                energies.extend(row.iter().map(|m| m.norm_sqr() as f64));
                *rows_done += 1;
                Ok(())
            }
            FrameBuilder::Rgb { compressor, rows } => {
                if let Some(r) = compressor.push_row(row)? {
                    rows.push(r);
                }
                Ok(())
            }
        }
    }

    fn image_rows_done(&self) -> usize {
        match self {
            FrameBuilder::Gray { rows_done, .. } => *rows_done,
            FrameBuilder::Rgb { rows, .. } => rows.len(),
        }
    }

    fn build_payload(&self, cfg: &PipelineConfig, n0_db: f64) -> (Vec<u8>, u8) {
        match self {
            FrameBuilder::Gray { energies, .. } => {
                let pixels = energies
                    .iter()
                    .map(|&e| cfg.mapping.pixel(10.0 * e.log10() - n0_db))
                    .collect();
                (pixels, 1)
            }
            FrameBuilder::Rgb { rows, .. } => {
                let img = energy_rows_to_rgb(rows, n0_db, &cfg.mapping);
                (img.pixels, 3)
            }
        }
    }
}

struct ProducerStats {
    samples_consumed: u64,
    frames_produced: u64,
    frames_dropped: u64,
    queue_high_water: usize,
    busy: Duration,
}

fn produce_frames<S: SampleSource>(
    mut source: S,
    cfg: StreamConfig,
    tx: crossbeam_channel::Sender<Vec<u8>>,
) -> Result<ProducerStats, StreamError> {
    let n = cfg.pipeline.fft_size;
    let spectrum_rows_per_frame = cfg.pipeline.image_rows
        * match cfg.image_kind {
            ImageKind::Gray => 1,
            ImageKind::Rgb => cfg.pipeline.compression.rows_per_output(),
        };
    let rate = source.sample_rate_hz();

    let mut stats = ProducerStats {
        samples_consumed: 0,
        frames_produced: 0,
        frames_dropped: 0,
        queue_high_water: 0,
        busy: Duration::ZERO,
    };
    let mut fft = FftStage::new(n);
    let mut chunk = vec![Complex32::new(0.0, 0.0); n];
    let mut row = vec![Complex32::new(0.0, 0.0); n];
    let mut builder = FrameBuilder::new(&cfg.pipeline, cfg.image_kind);
    let mut estimator = NoiseFloorEstimator::new(n);
    let mut rows_fed = 0usize;
    let mut frame_start_sample = 0u64;

    'outer: loop {
        // Assemble one FFT chunk; a partial tail ends the stream.
        let t = Instant::now();
        let mut filled = 0;
        while filled < n {
            let got = source.fill(&mut chunk[filled..])?;
            if got == 0 {
                stats.busy += t.elapsed();
                break 'outer;
            }
            filled += got;
        }
        stats.samples_consumed += n as u64;

        fft.process_into(&chunk, &mut row)?;
        estimator.push_row(&row)?;
        builder.push_row(&row)?;
        rows_fed += 1;

        if rows_fed == spectrum_rows_per_frame {
            debug_assert_eq!(builder.image_rows_done(), cfg.pipeline.image_rows);
            let n0 = match cfg.pipeline.noise_floor {
                NoiseFloorRef::Auto => estimator.finish()?,
                NoiseFloorRef::SamplePowerDb(p) => {
                    rfscan_core::spectral::noise_floor_bin_db(p, n)
                }
            };
            let (payload, channels) = builder.build_payload(&cfg.pipeline, n0);
            let msg = FrameMessage {
                version: crate::frame::FRAME_VERSION,
                frame_index: stats.frames_produced,
                t0_ns: (frame_start_sample as f64 / rate * 1e9).round() as u64,
                n_bins: n as u32,
                n_rows: cfg.pipeline.image_rows as u32,
                channels,
                payload,
            };
            let encoded = encode_frame(&msg);
            stats.busy += t.elapsed();

            let occupancy = (tx.len() + 1).min(cfg.queue_capacity);
            stats.queue_high_water = stats.queue_high_water.max(occupancy);
            match cfg.policy {
                QueuePolicy::Block => {
                    if tx.send(encoded).is_err() {
                        break 'outer; // consumer went away
                    }
                    stats.frames_produced += 1;
                }
                QueuePolicy::DropNewest => match tx.try_send(encoded) {
                    Ok(()) => stats.frames_produced += 1,
                    Err(TrySendError::Full(_)) => {
                        stats.frames_produced += 1;
                        stats.frames_dropped += 1;
                    }
                    Err(TrySendError::Disconnected(_)) => break 'outer,
                },
                QueuePolicy::Fail => match tx.try_send(encoded) {
                    Ok(()) => stats.frames_produced += 1,
                    Err(TrySendError::Full(_)) => {
                        return Err(StreamError::QueueOverflow {
                            produced: stats.frames_produced,
                        });
                    }
                    Err(TrySendError::Disconnected(_)) => break 'outer,
                },
            }

            builder = FrameBuilder::new(&cfg.pipeline, cfg.image_kind);
            estimator = NoiseFloorEstimator::new(n);
            rows_fed = 0;
            frame_start_sample = stats.samples_consumed;
            continue;
        }
        stats.busy += t.elapsed();
    }
    Ok(stats)
}

/// Runs the full two-stage pipeline until the source is exhausted.
///
/// Stage A runs on its own thread; stage B (decode, detect, sink) runs on
/// the calling thread. Returns combined statistics.
pub fn run_stream<S: SampleSource + 'static>(
    source: S,
    config: &StreamConfig,
    sink: &mut dyn FrameSink,
) -> Result<StreamStats, StreamError> {
    config.pipeline.validate()?;
    if config.queue_capacity == 0 {
        return Err(StreamError::BadConfig("queue capacity must be >= 1".into()));
    }

    let rate = source.sample_rate_hz();
    let geom = match config.image_kind {
        ImageKind::Gray => FrameGeometry::gray(rate, &config.pipeline),
        ImageKind::Rgb => FrameGeometry::rgb(rate, &config.pipeline),
    };

    let (tx, rx) = bounded::<Vec<u8>>(config.queue_capacity);
    let producer_cfg = config.clone();
    let wall = Instant::now();
    let producer =
        std::thread::spawn(move || produce_frames(source, producer_cfg, tx));

    let mut stats = StreamStats::default();
    let mut consumer_err: Option<StreamError> = None;
    while let Ok(encoded) = rx.recv() {
        let t = Instant::now();
        let result = (|| -> Result<(), StreamError> {
            let msg = decode_frame(&encoded)?;
            let detections: Vec<Detection> = if config.detect {
                match msg.to_gray() {
                    Some(img) => config.detector.detect_gray(&img, &geom),
                    None => match msg.to_rgb() {
                        Some(img) => config.detector.detect_rgb(&img, &geom),
                        None => Vec::new(),
                    },
                }
            } else {
                Vec::new()
            };
            stats.detections += detections.len() as u64;
            sink.on_frame(&msg, &detections);
            Ok(())
        })();
        stats.stage_b_busy_s += t.elapsed().as_secs_f64();
        match result {
            Ok(()) => stats.frames_processed += 1,
            Err(e) => {
                consumer_err = Some(e);
                break; // dropping rx unblocks the producer
            }
        }
    }
    drop(rx);

    let produced = producer.join().map_err(|_| StreamError::WorkerPanicked)?;
    stats.wall_s = wall.elapsed().as_secs_f64();
    if let Some(e) = consumer_err {
        return Err(e);
    }
    let p = produced?;
    stats.samples_consumed = p.samples_consumed;
    stats.frames_produced = p.frames_produced;
    stats.frames_dropped = p.frames_dropped;
    stats.queue_high_water = p.queue_high_water;
    stats.stage_a_busy_s = p.busy.as_secs_f64();
    Ok(stats)
}
