//! Spectro-temporal pipeline: chunked FFT, noise-floor referencing,
//! grayscale mapping and two-stage energy compression into RGB images.
//!
//! Conventions used throughout:
//!
//! * FFTs are unnormalized (plain DFT sums) and FFT-shifted, so column 0
//!   is -fs/2 and the DC bin sits at column N/2.
//! * Noise floors are referenced per analysis bin. A flat noise of
//!   per-sample power `p` shows up at `p + 10*log10(N)` per bin.
//! * A bin amplitude `m` maps to dB-over-floor `A = 20*log10|m| - N0`,
//!   then to a pixel `p = round(gamma * (clamp(A) - a_min))` with
//!   `gamma = 255 / (a_max - a_min)`. Rounding is half-away-from-zero.
//! * Energy accumulation is f64 regardless of the sample type, and the
//!   streaming compressor performs the exact operations of the batch
//!   formulation in the same order, so the two agree bit for bit.

use num_complex::Complex32;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

use crate::emission::IqRecording;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("chunk length {got} does not match FFT size {expected}")]
    WrongChunkLength { expected: usize, got: usize },
    #[error("need {needed} samples, recording has {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// dB-over-floor to pixel mapping window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    pub a_min_db: f64,
    pub a_max_db: f64,
}

impl MappingConfig {
    pub fn new(a_min_db: f64, a_max_db: f64) -> Result<Self, SpectralError> {
        if !(a_min_db.is_finite() && a_max_db.is_finite() && a_max_db > a_min_db) {
            return Err(SpectralError::InvalidConfig(format!(
                "mapping window requires a_max > a_min, got [{a_min_db}, {a_max_db}]"
            )));
        }
        Ok(Self { a_min_db, a_max_db })
    }

    /// Pixel units per dB: full range maps onto [0, 255].
    pub fn gamma(&self) -> f64 {
        255.0 / (self.a_max_db - self.a_min_db)
    }

    /// Maps one dB-over-floor value to a pixel. `-inf` maps to 0.
    pub fn pixel(&self, a_db: f64) -> u8 {
        let clamped = a_db.clamp(self.a_min_db, self.a_max_db);
        // Multiply before dividing: keeps exact half-way cases (for
        // window midpoints representable in binary) exact, so rounding
        // matches the defining formula rather than f64 gamma error.
        let p = (255.0 * (clamped - self.a_min_db) / (self.a_max_db - self.a_min_db)).round();
        p.clamp(0.0, 255.0) as u8
    }

    /// Inverse of [`pixel`](Self::pixel) on its integer outputs, as linear
    /// energy. Pixel 0 (anything at or below the window) maps to zero.
    pub fn pixel_to_energy(&self, p: u8) -> f64 {
        if p == 0 {
            return 0.0;
        }
        let a_db = p as f64 / self.gamma() + self.a_min_db;
        10f64.powf(a_db / 10.0)
    }
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            a_min_db: 0.0,
            a_max_db: 50.0,
        }
    }
}

/// Two-stage compression factors: stage one averages `m1` FFT rows into an
/// energy row, stage two folds `m2` energy rows into max/min/avg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub m1: usize,
    pub m2: usize,
}

impl CompressionConfig {
    pub fn rows_per_output(&self) -> usize {
        self.m1 * self.m2
    }
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self { m1: 3, m2: 4 }
    }
}

/// Where the per-bin noise reference comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseFloorRef {
    /// Estimate from the frame itself (median over bins of the per-bin
    /// mean energy).
    Auto,
    /// Known per-sample noise power in dB; converted to the per-bin
    /// reference using the FFT size.
    SamplePowerDb(f64),
}

/// Per-bin noise reference for a flat per-sample noise power.
pub fn noise_floor_bin_db(sample_power_db: f64, fft_size: usize) -> f64 {
    sample_power_db + 10.0 * (fft_size as f64).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fft_size: usize,
    /// Output image height in pixels.
    pub image_rows: usize,
    pub mapping: MappingConfig,
    pub compression: CompressionConfig,
    pub noise_floor: NoiseFloorRef,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SpectralError> {
        if self.fft_size < 8 || !self.fft_size.is_power_of_two() {
            return Err(SpectralError::InvalidConfig(format!(
                "fft_size must be a power of two >= 8, got {}",
                self.fft_size
            )));
        }
        if self.image_rows == 0 {
            return Err(SpectralError::InvalidConfig("image_rows must be >= 1".into()));
        }
        if self.compression.m1 == 0 || self.compression.m2 == 0 {
            return Err(SpectralError::InvalidConfig(
                "compression factors must be >= 1".into(),
            ));
        }
        MappingConfig::new(self.mapping.a_min_db, self.mapping.a_max_db)?;
        Ok(())
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fft_size: 512,
            image_rows: 512,
            mapping: MappingConfig::default(),
            compression: CompressionConfig::default(),
            noise_floor: NoiseFloorRef::Auto,
        }
    }
}

/// Physical interpretation of an image produced by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub sample_rate_hz: f64,
    pub fft_size: usize,
    pub image_rows: usize,
    /// Spectrum rows consumed per image row: 1 for grayscale frames,
    /// `m1 * m2` for compressed RGB frames.
    pub rows_per_image_row: usize,
}

impl FrameGeometry {
    pub fn gray(sample_rate_hz: f64, cfg: &PipelineConfig) -> Self {
        Self {
            sample_rate_hz,
            fft_size: cfg.fft_size,
            image_rows: cfg.image_rows,
            rows_per_image_row: 1,
        }
    }

    pub fn rgb(sample_rate_hz: f64, cfg: &PipelineConfig) -> Self {
        Self {
            sample_rate_hz,
            fft_size: cfg.fft_size,
            image_rows: cfg.image_rows,
            rows_per_image_row: cfg.compression.rows_per_output(),
        }
    }

    pub fn samples_per_image(&self) -> usize {
        self.fft_size * self.image_rows * self.rows_per_image_row
    }

    pub fn seconds_per_image_row(&self) -> f64 {
        (self.fft_size * self.rows_per_image_row) as f64 / self.sample_rate_hz
    }

    /// Wall-clock time covered by one full image.
    pub fn time_span_s(&self) -> f64 {
        self.image_rows as f64 * self.seconds_per_image_row()
    }

    pub fn hz_per_column(&self) -> f64 {
        self.sample_rate_hz / self.fft_size as f64
    }

    /// Normalized x (0..1, left edge) of a frequency offset from center.
    pub fn offset_hz_to_x(&self, offset_hz: f64) -> f64 {
        0.5 + offset_hz / self.sample_rate_hz
    }

    /// Center frequency offset (Hz) of a normalized x coordinate.
    pub fn x_to_offset_hz(&self, x: f64) -> f64 {
        (x - 0.5) * self.sample_rate_hz
    }
}

/// FFT-shifted complex spectra, row-major, one row per time chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    bins: usize,
    data: Vec<Complex32>,
}

impl SpectralMatrix {
    pub fn new(bins: usize) -> Self {
        Self { bins, data: Vec::new() }
    }

    pub fn from_rows(bins: usize, data: Vec<Complex32>) -> Result<Self, SpectralError> {
        if bins == 0 || data.len() % bins != 0 {
            return Err(SpectralError::WrongChunkLength {
                expected: bins,
                got: data.len(),
            });
        }
        Ok(Self { bins, data })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn rows(&self) -> usize {
        if self.bins == 0 { 0 } else { self.data.len() / self.bins }
    }

    pub fn row(&self, r: usize) -> &[Complex32] {
        &self.data[r * self.bins..(r + 1) * self.bins]
    }

    pub fn push_row(&mut self, row: &[Complex32]) -> Result<(), SpectralError> {
        if row.len() != self.bins {
            return Err(SpectralError::WrongChunkLength {
                expected: self.bins,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[Complex32]> {
        self.data.chunks_exact(self.bins)
    }
}

/// dB-over-floor values, row-major. Entries may be `-inf` for zero bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrMatrix {
    pub bins: usize,
    pub data: Vec<f64>,
}

impl SnrMatrix {
    pub fn rows(&self) -> usize {
        if self.bins == 0 { 0 } else { self.data.len() / self.bins }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.bins..(r + 1) * self.bins]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }
}

/// Interleaved 8-bit RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Extracts one channel (0 = R, 1 = G, 2 = B) as a grayscale image.
    pub fn channel(&self, c: usize) -> GrayImage {
        assert!(c < 3);
        let pixels = self.pixels.iter().skip(c).step_by(3).copied().collect();
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

/// Reusable FFT plan for fixed-size chunks. Output rows are FFT-shifted.
pub struct FftStage {
    size: usize,
    fft: Arc<dyn Fft<f32>>,
    buf: Vec<Complex32>,
    scratch: Vec<Complex32>,
}

impl FftStage {
    pub fn new(size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(size);
        let scratch = vec![Complex32::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Self {
            size,
            fft,
            buf: vec![Complex32::new(0.0, 0.0); size],
            scratch,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Transforms one chunk into `out` (must be `size` long), FFT-shifted.
    pub fn process_into(
        &mut self,
        chunk: &[Complex32],
        out: &mut [Complex32],
    ) -> Result<(), SpectralError> {
        if chunk.len() != self.size || out.len() != self.size {
            return Err(SpectralError::WrongChunkLength {
                expected: self.size,
                got: chunk.len(),
            });
        }
        self.buf.copy_from_slice(chunk);
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        // Rotate so the most negative frequency comes first.
        let c = self.size.div_ceil(2);
        out[..self.size - c].copy_from_slice(&self.buf[c..]);
        out[self.size - c..].copy_from_slice(&self.buf[..c]);
        Ok(())
    }

    pub fn process(&mut self, chunk: &[Complex32]) -> Result<Vec<Complex32>, SpectralError> {
        let mut out = vec![Complex32::new(0.0, 0.0); self.size];
        self.process_into(chunk, &mut out)?;
        Ok(out)
    }
}

/// One-shot FFT of a single chunk. Prefer [`FftStage`] in loops.
pub fn fft_frame(chunk: &[Complex32], fft_size: usize) -> Result<Vec<Complex32>, SpectralError> {
    FftStage::new(fft_size).process(chunk)
}

/// Splits the head of a recording into FFT rows. Trailing samples that do
/// not fill a chunk are ignored; `rows` limits how many rows are taken.
pub fn spectral_frame(
    samples: &[Complex32],
    fft_size: usize,
    rows: usize,
) -> Result<SpectralMatrix, SpectralError> {
    let needed = fft_size * rows;
    if samples.len() < needed {
        return Err(SpectralError::InsufficientSamples {
            needed,
            got: samples.len(),
        });
    }
    let mut stage = FftStage::new(fft_size);
    let mut data = vec![Complex32::new(0.0, 0.0); needed];
    for (chunk, out) in samples[..needed]
        .chunks_exact(fft_size)
        .zip(data.chunks_exact_mut(fft_size))
    {
        stage.process_into(chunk, out)?;
    }
    SpectralMatrix::from_rows(fft_size, data)
}

/// Streaming noise-floor estimator: accumulates per-bin mean energies and
/// reports the median bin in dB.
///
/// The median over bins rejects columns occupied by narrowband emissions;
/// the mean over rows keeps the pure-noise estimate tight (single energy
/// samples scatter over several dB, their averages do not).
#[derive(Debug, Clone)]
pub struct NoiseFloorEstimator {
    sums: Vec<f64>,
    rows: usize,
}

impl NoiseFloorEstimator {
    pub fn new(bins: usize) -> Self {
        Self {
            sums: vec![0.0; bins],
            rows: 0,
        }
    }

    pub fn push_row(&mut self, row: &[Complex32]) -> Result<(), SpectralError> {
        if row.len() != self.sums.len() {
            return Err(SpectralError::WrongChunkLength {
                expected: self.sums.len(),
                got: row.len(),
            });
        }
        for (sum, m) in self.sums.iter_mut().zip(row) {
            *sum += m.norm_sqr() as f64;
        }
        self.rows += 1;
        Ok(())
    }

    /// Median per-bin mean energy, in dB.
    pub fn finish(&self) -> Result<f64, SpectralError> {
        if self.rows == 0 || self.sums.is_empty() {
            return Err(SpectralError::EmptyInput);
        }
        let mut means: Vec<f64> = self.sums.iter().map(|s| s / self.rows as f64).collect();
        means.sort_by(|a, b| a.total_cmp(b));
        let n = means.len();
        let median = if n % 2 == 1 {
            means[n / 2]
        } else {
            0.5 * (means[n / 2 - 1] + means[n / 2])
        };
        Ok(10.0 * median.log10())
    }
}

/// Per-bin noise floor (dB) of a spectral frame.
pub fn estimate_noise_floor(spectrum: &SpectralMatrix) -> Result<f64, SpectralError> {
    let mut est = NoiseFloorEstimator::new(spectrum.bins());
    for row in spectrum.iter_rows() {
        est.push_row(row)?;
    }
    est.finish()
}

/// Converts bin amplitudes to dB over the given per-bin noise floor.
pub fn to_snr_matrix(spectrum: &SpectralMatrix, noise_floor_db: f64) -> SnrMatrix {
    let data = spectrum
        .data
        .iter()
        .map(|m| {
            let e = m.norm_sqr() as f64;
            10.0 * e.log10() - noise_floor_db
        })
        .collect();
    SnrMatrix {
        bins: spectrum.bins(),
        data,
    }
}

/// Quantizes dB-over-floor values into 8-bit pixels.
pub fn map_grayscale(snr: &SnrMatrix, mapping: &MappingConfig) -> GrayImage {
    GrayImage {
        width: snr.bins,
        height: snr.rows(),
        pixels: snr.data.iter().map(|&a| mapping.pixel(a)).collect(),
    }
}

/// One output row of the two-stage compressor: per-bin max, min and mean
/// of the stage-one energies.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub max: Vec<f64>,
    pub min: Vec<f64>,
    pub avg: Vec<f64>,
}

/// Streaming two-stage energy compressor.
///
/// Stage one averages the bin energies of `m1` consecutive FFT rows.
/// Stage two tracks max, min and mean over `m2` consecutive stage-one
/// rows and emits an [`EnergyRow`] when a group completes. Partial groups
/// at end of stream are dropped, never emitted.
#[derive(Debug, Clone)]
pub struct Compressor {
    bins: usize,
    m1: usize,
    m2: usize,
    s1_sum: Vec<f64>,
    s1_count: usize,
    s2_max: Vec<f64>,
    s2_min: Vec<f64>,
    s2_sum: Vec<f64>,
    s2_count: usize,
}

impl Compressor {
    pub fn new(bins: usize, cfg: CompressionConfig) -> Self {
        Self {
            bins,
            m1: cfg.m1.max(1),
            m2: cfg.m2.max(1),
            s1_sum: vec![0.0; bins],
            s1_count: 0,
            s2_max: vec![0.0; bins],
            s2_min: vec![0.0; bins],
            s2_sum: vec![0.0; bins],
            s2_count: 0,
        }
    }

    /// Feeds one FFT row; returns a finished output row every `m1 * m2`
    /// inputs.
    pub fn push_row(&mut self, row: &[Complex32]) -> Result<Option<EnergyRow>, SpectralError> {
        if row.len() != self.bins {
            return Err(SpectralError::WrongChunkLength {
                expected: self.bins,
                got: row.len(),
            });
        }
        for (sum, m) in self.s1_sum.iter_mut().zip(row) {
            *sum += m.norm_sqr() as f64;
        }
        self.s1_count += 1;
        if self.s1_count < self.m1 {
            return Ok(None);
        }

        // Stage-one row complete. The fold is split into an assign loop
        // (first stage-one row of a group) and a compare loop so max/min
        // compile branch-free; per-bin branches on random spectra are
        // unpredictable and dominate the cost of this stage otherwise.
        let m1 = self.m1 as f64;
        let folds = self
            .s1_sum
            .iter_mut()
            .zip(self.s2_max.iter_mut())
            .zip(self.s2_min.iter_mut())
            .zip(self.s2_sum.iter_mut());
        if self.s2_count == 0 {
            for (((s, mx), mn), sm) in folds {
                let e = *s / m1;
                *mx = e;
                *mn = e;
                *sm = e;
                *s = 0.0;
            }
        } else {
            for (((s, mx), mn), sm) in folds {
                let e = *s / m1;
                *mx = mx.max(e);
                *mn = mn.min(e);
                *sm += e;
                *s = 0.0;
            }
        }
        self.s1_count = 0;
        self.s2_count += 1;
        if self.s2_count < self.m2 {
            return Ok(None);
        }

        let row = EnergyRow {
            max: std::mem::replace(&mut self.s2_max, vec![0.0; self.bins]),
            min: std::mem::replace(&mut self.s2_min, vec![0.0; self.bins]),
            avg: self
                .s2_sum
                .iter()
                .map(|s| s / self.m2 as f64)
                .collect(),
        };
        self.s2_sum.iter_mut().for_each(|s| *s = 0.0);
        self.s2_count = 0;
        Ok(Some(row))
    }

    /// FFT rows currently buffered in unfinished groups.
    pub fn pending_rows(&self) -> usize {
        self.s2_count * self.m1 + self.s1_count
    }
}

/// Compresses a whole spectral frame at once. Trailing rows that do not
/// complete an output group are dropped.
pub fn compress_frame(
    spectrum: &SpectralMatrix,
    cfg: CompressionConfig,
) -> Result<Vec<EnergyRow>, SpectralError> {
    let mut c = Compressor::new(spectrum.bins(), cfg);
    let mut out = Vec::new();
    for row in spectrum.iter_rows() {
        if let Some(r) = c.push_row(row)? {
            out.push(r);
        }
    }
    Ok(out)
}

/// Renders compressed energy rows to RGB: R from the max, G from the min,
/// B from the mean, each mapped as `f(10*log10(E) - N0)`.
pub fn energy_rows_to_rgb(
    rows: &[EnergyRow],
    noise_floor_db: f64,
    mapping: &MappingConfig,
) -> RgbImage {
    let width = rows.first().map_or(0, |r| r.max.len());
    let mut img = RgbImage::new(width, rows.len());
    for (y, row) in rows.iter().enumerate() {
        for x in 0..width {
            let px = [
                mapping.pixel(10.0 * row.max[x].log10() - noise_floor_db),
                mapping.pixel(10.0 * row.min[x].log10() - noise_floor_db),
                mapping.pixel(10.0 * row.avg[x].log10() - noise_floor_db),
            ];
            img.set(x, y, px);
        }
    }
    img
}

fn resolve_noise_floor(
    cfg: &PipelineConfig,
    estimator: &NoiseFloorEstimator,
) -> Result<f64, SpectralError> {
    match cfg.noise_floor {
        NoiseFloorRef::Auto => estimator.finish(),
        NoiseFloorRef::SamplePowerDb(p) => Ok(noise_floor_bin_db(p, cfg.fft_size)),
    }
}

/// Renders the head of a recording as an uncompressed grayscale frame of
/// `image_rows` FFT rows.
pub fn render_gray(
    rec: &IqRecording,
    cfg: &PipelineConfig,
) -> Result<(GrayImage, FrameGeometry), SpectralError> {
    cfg.validate()?;
    let geom = FrameGeometry::gray(rec.sample_rate_hz, cfg);
    let spectrum = spectral_frame(&rec.samples, cfg.fft_size, cfg.image_rows)?;
    let mut est = NoiseFloorEstimator::new(cfg.fft_size);
    for row in spectrum.iter_rows() {
        est.push_row(row)?;
    }
    let n0 = resolve_noise_floor(cfg, &est)?;
    let img = map_grayscale(&to_snr_matrix(&spectrum, n0), &cfg.mapping);
    Ok((img, geom))
}

/// Renders the head of a recording as a compressed RGB frame of
/// `image_rows` output rows (consuming `m1 * m2` FFT rows each).
pub fn render_rgb(
    rec: &IqRecording,
    cfg: &PipelineConfig,
) -> Result<(RgbImage, FrameGeometry), SpectralError> {
    cfg.validate()?;
    let geom = FrameGeometry::rgb(rec.sample_rate_hz, cfg);
    let needed = geom.samples_per_image();
    if rec.samples.len() < needed {
        return Err(SpectralError::InsufficientSamples {
            needed,
            got: rec.samples.len(),
        });
    }

    let mut stage = FftStage::new(cfg.fft_size);
    let mut comp = Compressor::new(cfg.fft_size, cfg.compression);
    let mut est = NoiseFloorEstimator::new(cfg.fft_size);
    let mut fft_row = vec![Complex32::new(0.0, 0.0); cfg.fft_size];
    let mut rows = Vec::with_capacity(cfg.image_rows);
    for chunk in rec.samples[..needed].chunks_exact(cfg.fft_size) {
        stage.process_into(chunk, &mut fft_row)?;
        est.push_row(&fft_row)?;
        if let Some(r) = comp.push_row(&fft_row)? {
            rows.push(r);
        }
    }
    debug_assert_eq!(rows.len(), cfg.image_rows);

    let n0 = resolve_noise_floor(cfg, &est)?;
    Ok((energy_rows_to_rgb(&rows, n0, &cfg.mapping), geom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Textbook DFT with FFT-shift, kept deliberately naive.
    fn dft_shifted(chunk: &[Complex32]) -> Vec<Complex64> {
        let n = chunk.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (i, o) in out.iter_mut().enumerate() {
            let k = (i + n.div_ceil(2)) % n;
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &x) in chunk.iter().enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                acc += Complex64::new(x.re as f64, x.im as f64)
                    * Complex64::new(ang.cos(), ang.sin());
            }
            *o = acc;
        }
        out
    }

    fn random_chunk(n: usize, seed: u64) -> Vec<Complex32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn fft_matches_naive_dft() {
        let chunk = random_chunk(16, 9);
        let fast = fft_frame(&chunk, 16).unwrap();
        let slow = dft_shifted(&chunk);
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f.re as f64 - s.re).abs() < 1e-4);
            assert!((f.im as f64 - s.im).abs() < 1e-4);
        }
    }

    #[test]
    fn fft_preserves_energy() {
        let chunk = random_chunk(512, 3);
        let spec = fft_frame(&chunk, 512).unwrap();
        let time_e: f64 = chunk.iter().map(|s| s.norm_sqr() as f64).sum();
        let freq_e: f64 = spec.iter().map(|s| s.norm_sqr() as f64).sum();
        // Unnormalized transform: spectral energy is N times time energy.
        assert!((freq_e / (time_e * 512.0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn positive_tone_lands_right_of_center() {
        // Tone at +fs/4 must appear at column 3N/4 after the shift.
        let n = 64;
        let chunk: Vec<Complex32> = (0..n)
            .map(|t| {
                let ang = 2.0 * PI * (t as f64) * 0.25;
                Complex32::new(ang.cos() as f32, ang.sin() as f32)
            })
            .collect();
        let spec = fft_frame(&chunk, n).unwrap();
        let peak = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .unwrap()
            .0;
        assert_eq!(peak, 3 * n / 4);
    }

    #[test]
    fn fft_rejects_wrong_chunk_length() {
        let chunk = random_chunk(100, 0);
        assert!(matches!(
            fft_frame(&chunk, 128),
            Err(SpectralError::WrongChunkLength { expected: 128, got: 100 })
        ));
    }

    #[test]
    fn noise_floor_of_constant_rows_is_exact() {
        // Every bin magnitude r: per-bin energy r^2, floor = 20*log10(r).
        let r = 3.0f32;
        let data = vec![Complex32::new(r, 0.0); 8 * 4];
        let spec = SpectralMatrix::from_rows(8, data).unwrap();
        let n0 = estimate_noise_floor(&spec).unwrap();
        assert!((n0 - 20.0 * (r as f64).log10()).abs() < 1e-9);
    }

    #[test]
    fn noise_floor_ignores_hot_columns() {
        let bins = 64;
        let rows = 16;
        let mut data = vec![Complex32::new(1.0, 0.0); bins * rows];
        // Saturate one column far above everything else.
        for r in 0..rows {
            data[r * bins + 20] = Complex32::new(1000.0, 0.0);
        }
        let spec = SpectralMatrix::from_rows(bins, data).unwrap();
        let n0 = estimate_noise_floor(&spec).unwrap();
        assert!((n0 - 0.0).abs() < 1e-9);
    }

    #[test]
    fn noise_floor_tracks_true_noise_power() {
        // Complex AWGN at 0 dB per sample, FFT of size n: per-bin energy
        // averages n, so the estimate should sit near 10*log10(n).
        let n = 512;
        let rows = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let sigma = (0.5f64).sqrt() as f32;
        let samples: Vec<Complex32> = (0..n * rows)
            .map(|_| {
                let re: f32 = rand_distr::StandardNormal.sample(&mut rng);
                let im: f32 = rand_distr::StandardNormal.sample(&mut rng);
                Complex32::new(re * sigma, im * sigma)
            })
            .collect();
        let spec = spectral_frame(&samples, n, rows).unwrap();
        let n0 = estimate_noise_floor(&spec).unwrap();
        let want = 10.0 * (n as f64).log10();
        assert!((n0 - want).abs() < 1.0, "estimate {n0}, true {want}");
    }

    use rand_distr::Distribution;

    #[test]
    fn mapping_window_endpoints_and_midpoint() {
        let m = MappingConfig::default();
        assert_eq!(m.pixel(f64::NEG_INFINITY), 0);
        assert_eq!(m.pixel(0.0), 0);
        assert_eq!(m.pixel(-3.0), 0);
        assert_eq!(m.pixel(50.0), 255);
        assert_eq!(m.pixel(60.0), 255);
        assert_eq!(m.pixel(25.0), 128); // 25 * 5.1 = 127.5 rounds away from zero

        let m51 = MappingConfig::new(0.0, 51.0).unwrap();
        assert_eq!(m51.pixel(25.5), 128);
        assert_eq!(m51.pixel(51.0), 255);
    }

    #[test]
    fn mapping_pixel_roundtrips_through_energy() {
        let m = MappingConfig::default();
        for p in 1..=255u8 {
            let e = m.pixel_to_energy(p);
            assert_eq!(m.pixel(10.0 * e.log10()), p);
        }
        assert_eq!(m.pixel_to_energy(0), 0.0);
    }

    #[test]
    fn mapping_rejects_inverted_window() {
        assert!(MappingConfig::new(10.0, 10.0).is_err());
        assert!(MappingConfig::new(10.0, 5.0).is_err());
    }

    #[test]
    fn compressor_matches_hand_computed_group() {
        // Rows with |m|^2 = 1, 3, 5, 7; m1=2 averages to 2 and 6; m2=2
        // then yields max 6, min 2, avg 4.
        let bins = 4;
        let mut c = Compressor::new(bins, CompressionConfig { m1: 2, m2: 2 });
        let mk = |v: f32| vec![Complex32::new(v.sqrt(), 0.0); bins];
        assert!(c.push_row(&mk(1.0)).unwrap().is_none());
        assert!(c.push_row(&mk(3.0)).unwrap().is_none());
        assert!(c.push_row(&mk(5.0)).unwrap().is_none());
        let row = c.push_row(&mk(7.0)).unwrap().expect("group complete");
        for i in 0..bins {
            assert!((row.max[i] - 6.0).abs() < 1e-6);
            assert!((row.min[i] - 2.0).abs() < 1e-6);
            assert!((row.avg[i] - 4.0).abs() < 1e-6);
        }
        assert_eq!(c.pending_rows(), 0);
    }

    #[test]
    fn compressor_drops_partial_groups() {
        let mut c = Compressor::new(2, CompressionConfig { m1: 3, m2: 4 });
        let row = vec![Complex32::new(1.0, 0.0); 2];
        for _ in 0..11 {
            assert!(c.push_row(&row).unwrap().is_none());
        }
        assert_eq!(c.pending_rows(), 11);
        assert!(c.push_row(&row).unwrap().is_some());
        assert_eq!(c.pending_rows(), 0);
    }

    /// Batch reference: split rows into m2 groups of m1, average each
    /// group, then fold. Must match the streaming compressor bit for bit.
    fn compress_batch_reference(
        spectrum: &SpectralMatrix,
        cfg: CompressionConfig,
    ) -> Vec<EnergyRow> {
        let bins = spectrum.bins();
        let group = cfg.m1 * cfg.m2;
        let mut out = Vec::new();
        for g in 0..spectrum.rows() / group {
            let mut stage1 = Vec::new();
            for j in 0..cfg.m2 {
                let mut sums = vec![0.0f64; bins];
                for i in 0..cfg.m1 {
                    let row = spectrum.row(g * group + j * cfg.m1 + i);
                    for (s, m) in sums.iter_mut().zip(row) {
                        *s += m.norm_sqr() as f64;
                    }
                }
                stage1.push(sums.iter().map(|s| s / cfg.m1 as f64).collect::<Vec<_>>());
            }
            let mut max = stage1[0].clone();
            let mut min = stage1[0].clone();
            let mut sum = stage1[0].clone();
            for e in &stage1[1..] {
                for i in 0..bins {
                    if e[i] > max[i] {
                        max[i] = e[i];
                    }
                    if e[i] < min[i] {
                        min[i] = e[i];
                    }
                    sum[i] += e[i];
                }
            }
            out.push(EnergyRow {
                max,
                min,
                avg: sum.iter().map(|s| s / cfg.m2 as f64).collect(),
            });
        }
        out
    }

    #[test]
    fn streaming_compression_is_bit_exact_with_batch() {
        for (seed, (m1, m2)) in [(1, (1, 1)), (2, (2, 2)), (3, (3, 4)), (4, (5, 5))] {
            let bins = 8;
            let rows = 24;
            let data = random_chunk(bins * rows, seed);
            let spec = SpectralMatrix::from_rows(bins, data).unwrap();
            let cfg = CompressionConfig { m1, m2 };
            let streaming = compress_frame(&spec, cfg).unwrap();
            let batch = compress_batch_reference(&spec, cfg);
            assert_eq!(streaming.len(), batch.len());
            for (s, b) in streaming.iter().zip(&batch) {
                assert_eq!(s.max, b.max, "m1={m1} m2={m2}");
                assert_eq!(s.min, b.min, "m1={m1} m2={m2}");
                assert_eq!(s.avg, b.avg, "m1={m1} m2={m2}");
            }
        }
    }

    #[test]
    fn rgb_channels_obey_max_avg_min_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<EnergyRow> = (0..16)
            .map(|_| {
                let e: Vec<f64> = (0..8).map(|_| rng.random_range(0.1..1e5)).collect();
                let lo: Vec<f64> = e.iter().map(|v| v * rng.random_range(0.1..1.0)).collect();
                let avg: Vec<f64> = e.iter().zip(&lo).map(|(a, b)| 0.5 * (a + b)).collect();
                EnergyRow {
                    max: e,
                    min: lo,
                    avg,
                }
            })
            .collect();
        let img = energy_rows_to_rgb(&rows, 0.0, &MappingConfig::default());
        for y in 0..img.height {
            for x in 0..img.width {
                let [r, g, b] = img.get(x, y);
                assert!(r >= b && b >= g, "({x},{y}): r={r} g={g} b={b}");
            }
        }
    }

    #[test]
    fn gray_frame_covers_expected_time_span() {
        let cfg = PipelineConfig::default();
        let geom = FrameGeometry::gray(100e6, &cfg);
        assert!((geom.time_span_s() - 2.62144e-3).abs() < 1e-12);
        assert_eq!(geom.samples_per_image(), 512 * 512);

        let rgb = FrameGeometry::rgb(100e6, &cfg);
        assert_eq!(rgb.samples_per_image(), 512 * 512 * 12);
        assert!((rgb.time_span_s() - 12.0 * 2.62144e-3).abs() < 1e-12);
    }

    #[test]
    fn render_gray_requires_enough_samples() {
        let rec = IqRecording {
            samples: vec![Complex32::new(0.0, 0.0); 1000],
            sample_rate_hz: 100e6,
            noise_power_db: f64::NEG_INFINITY,
            ground_truth: vec![],
        };
        let cfg = PipelineConfig::default();
        assert!(matches!(
            render_gray(&rec, &cfg),
            Err(SpectralError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn render_rgb_streaming_equals_whole_frame_compression() {
        let cfg = PipelineConfig {
            fft_size: 16,
            image_rows: 6,
            compression: CompressionConfig { m1: 2, m2: 2 },
            noise_floor: NoiseFloorRef::SamplePowerDb(0.0),
            ..PipelineConfig::default()
        };
        let samples = random_chunk(16 * 6 * 4, 21);
        let rec = IqRecording {
            samples: samples.clone(),
            sample_rate_hz: 1e6,
            noise_power_db: 0.0,
            ground_truth: vec![],
        };
        let (img, geom) = render_rgb(&rec, &cfg).unwrap();
        assert_eq!((img.width, img.height), (16, 6));
        assert_eq!(geom.rows_per_image_row, 4);

        let spec = spectral_frame(&samples, 16, 24).unwrap();
        let rows = compress_frame(&spec, cfg.compression).unwrap();
        let want = energy_rows_to_rgb(&rows, noise_floor_bin_db(0.0, 16), &cfg.mapping);
        assert_eq!(img, want);
    }

    #[test]
    fn channel_extraction_matches_pixels() {
        let mut img = RgbImage::new(3, 2);
        img.set(1, 0, [10, 20, 30]);
        img.set(2, 1, [1, 2, 3]);
        let b = img.channel(2);
        assert_eq!(b.get(1, 0), 30);
        assert_eq!(b.get(2, 1), 3);
        assert_eq!(b.get(0, 0), 0);
    }
}
