//! Throughput microbenchmarks for the individual pipeline stages and the
//! assembled streaming runtime.
//!
//! Every benchmark feeds synthetic data to one stage in a tight loop until
//! the requested wall-clock duration has elapsed, then reports how many
//! original baseband samples that work corresponds to. Rates are in
//! megasamples per second so they can be compared directly against a
//! receiver's sample rate: a stage keeps up with live capture only if its
//! rate exceeds the capture rate.

use crate::stream::{run_stream, NullSink, QueuePolicy, StreamConfig, VecSource};
use num_complex::Complex32;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfscan_core::dataset::ImageKind;
use rfscan_core::detector::BaselineDetector;
use rfscan_core::spectral::{Compressor, FftStage};
use rfscan_core::{FrameGeometry, PipelineConfig};
use serde::Serialize;
use std::hint::black_box;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchModule {
    Fft,
    Compression,
    Detection,
    EndToEnd,
}

impl std::fmt::Display for BenchModule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchModule::Fft => "fft",
            BenchModule::Compression => "compression",
            BenchModule::Detection => "detection",
            BenchModule::EndToEnd => "end_to_end",
        })
    }
}

impl std::str::FromStr for BenchModule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fft" => Ok(BenchModule::Fft),
            "compression" => Ok(BenchModule::Compression),
            "detection" => Ok(BenchModule::Detection),
            "end_to_end" | "end-to-end" | "e2e" => Ok(BenchModule::EndToEnd),
            other => Err(format!("unknown bench module '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub module: BenchModule,
    pub samples_processed: u64,
    pub elapsed_s: f64,
    pub throughput_msamps: f64,
}

impl BenchReport {
    fn new(module: BenchModule, samples_processed: u64, elapsed_s: f64) -> Self {
        Self {
            module,
            samples_processed,
            elapsed_s,
            throughput_msamps: samples_processed as f64 / elapsed_s / 1e6,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn random_rows(n: usize, rows: usize, seed: u64) -> Vec<Complex32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * rows)
        .map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn bench_fft(cfg: &PipelineConfig, duration_s: f64, seed: u64) -> BenchReport {
    let n = cfg.fft_size;
    let batch_rows = 512;
    let input = random_rows(n, batch_rows, seed);
    let mut fft = FftStage::new(n);
    let mut out = vec![Complex32::new(0.0, 0.0); n];
    let mut samples = 0u64;
    let start = Instant::now();
    loop {
        for row in input.chunks_exact(n) {
            fft.process_into(row, &mut out).expect("row length matches");
            black_box(&out);
        }
        samples += (n * batch_rows) as u64;
        if start.elapsed().as_secs_f64() >= duration_s {
            break;
        }
    }
    BenchReport::new(BenchModule::Fft, samples, start.elapsed().as_secs_f64())
}

fn bench_compression(cfg: &PipelineConfig, duration_s: f64, seed: u64) -> BenchReport {
    let n = cfg.fft_size;
    let batch_rows = 512;
    let spectra = random_rows(n, batch_rows, seed);
    let mut compressor = Compressor::new(n, cfg.compression);
    // Each spectrum row stands in for n original time-domain samples.
    let mut samples = 0u64;
    let start = Instant::now();
    loop {
        for row in spectra.chunks_exact(n) {
            black_box(compressor.push_row(row).expect("row length matches"));
        }
        samples += (n * batch_rows) as u64;
        if start.elapsed().as_secs_f64() >= duration_s {
            break;
        }
    }
    BenchReport::new(BenchModule::Compression, samples, start.elapsed().as_secs_f64())
}

fn bench_detection(cfg: &PipelineConfig, duration_s: f64, seed: u64) -> BenchReport {
    // One representative compressed frame: noise floor plus a couple of
    // emissions, so connected-component work is realistic rather than empty.
    let rate = 100e6;
    let geom = FrameGeometry::rgb(rate, cfg);
    let scene = bench_scene(cfg, rate, seed);
    let rec = rfscan_core::emission::IqRecording {
        samples: scene,
        sample_rate_hz: rate,
        noise_power_db: 0.0,
        ground_truth: vec![],
    };
    let (img, _) = rfscan_core::spectral::render_rgb(&rec, cfg).expect("render");
    let detector = BaselineDetector::default();
    let mut samples = 0u64;
    let start = Instant::now();
    loop {
        black_box(detector.detect_rgb(&img, &geom));
        samples += geom.samples_per_image() as u64;
        if start.elapsed().as_secs_f64() >= duration_s {
            break;
        }
    }
    BenchReport::new(BenchModule::Detection, samples, start.elapsed().as_secs_f64())
}

fn bench_end_to_end(cfg: &PipelineConfig, duration_s: f64, seed: u64) -> BenchReport {
    let rate = 100e6;
    let geom = FrameGeometry::rgb(rate, cfg);
    let frame = bench_scene(cfg, rate, seed);
    let stream_cfg = StreamConfig {
        pipeline: cfg.clone(),
        image_kind: ImageKind::Rgb,
        queue_capacity: 8,
        policy: QueuePolicy::Block,
        detect: true,
        detector: BaselineDetector::default(),
    };
    let mut samples = 0u64;
    let mut elapsed = 0.0;
    // Re-run the whole stream over a cycled buffer until the budget is
    // spent; each run spans several frames so thread start-up is noise.
    let frames_per_run = 8u64;
    while elapsed < duration_s {
        let source = VecSource::cycle(
            frame.clone(),
            rate,
            frames_per_run * geom.samples_per_image() as u64,
        );
        let stats = run_stream(source, &stream_cfg, &mut NullSink).expect("stream");
        samples += stats.samples_consumed;
        elapsed += stats.wall_s;
    }
    BenchReport::new(BenchModule::EndToEnd, samples, elapsed)
}

/// Noise plus two mid-band emissions spanning one compressed frame.
fn bench_scene(cfg: &PipelineConfig, rate: f64, seed: u64) -> Vec<Complex32> {
    use rfscan_core::emission::{
        add_awgn, combine_recordings, synthesize_emission, EmissionClass, EmissionSpec,
    };
    let geom = FrameGeometry::rgb(rate, cfg);
    let duration_s = geom.samples_per_image() as f64 / rate;
    let parts: Vec<_> = [EmissionClass::WiFi, EmissionClass::Bluetooth]
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let spec = EmissionSpec {
                class: *class,
                center_offset_hz: (i as f64 - 0.5) * rate / 4.0,
                start_s: 0.0,
                duration_s,
                snr_db: 20.0,
                bandwidth_hz: None,
            };
            synthesize_emission(&spec, rate, seed.wrapping_add(i as u64)).expect("synth")
        })
        .collect();
    let combined = combine_recordings(&parts).expect("combine");
    let mut rec = add_awgn(&combined, 0.0, seed ^ 0x5EED);
    rec.samples.truncate(geom.samples_per_image());
    rec.samples
}

/// Measures one module for roughly `duration_s` of wall-clock time.
///
/// `duration_s` is clamped to at least one second; short windows make the
/// rate estimate too sensitive to scheduler jitter to be meaningful.
pub fn bench(module: BenchModule, duration_s: f64, cfg: &PipelineConfig, seed: u64) -> BenchReport {
    cfg.validate().expect("valid pipeline config");
    let duration_s = duration_s.max(1.0);
    match module {
        BenchModule::Fft => bench_fft(cfg, duration_s, seed),
        BenchModule::Compression => bench_compression(cfg, duration_s, seed),
        BenchModule::Detection => bench_detection(cfg, duration_s, seed),
        BenchModule::EndToEnd => bench_end_to_end(cfg, duration_s, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_throughput_is_samples_over_elapsed() {
        let r = BenchReport::new(BenchModule::Fft, 100_000_000, 1.0);
        assert!((r.throughput_msamps - 100.0).abs() < 1e-9);
    }

    #[test]
    fn module_names_round_trip() {
        for m in [
            BenchModule::Fft,
            BenchModule::Compression,
            BenchModule::Detection,
            BenchModule::EndToEnd,
        ] {
            assert_eq!(m.to_string().parse::<BenchModule>().unwrap(), m);
        }
    }

    #[test]
    fn report_serializes_with_snake_case_module() {
        let r = BenchReport::new(BenchModule::EndToEnd, 10, 1.0);
        assert!(r.to_json().contains("\"end_to_end\""));
    }
}
