//! Synthesis of baseband I/Q emissions.
//!
//! All signals are complex baseband at a caller-chosen sample rate. SNR is
//! defined per analysis bin: an emission synthesized at `snr_db` shows up
//! `snr_db` above the noise floor in a spectrogram bin that it occupies,
//! independent of the FFT size used for analysis. With unit-power noise
//! (0 dB per sample) that pins the emission's total power to
//! `10^(snr/10) * bandwidth / sample_rate`.

use num_complex::Complex32;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// The emission classes the toolkit knows how to synthesize and detect.
///
/// Class ids are part of the annotation file format and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EmissionClass {
    /// 802.11-style burst, 20 MHz, spectrally flat.
    WiFi,
    /// Bluetooth-style burst, 1 MHz, Gaussian-shaped spectrum.
    Bluetooth,
    /// 802.15.4-style burst, 2 MHz, half-sine shaped spectrum.
    ZigBee,
    /// Drone video downlink, 10 MHz, spectrally flat, long-lived.
    Lightbridge,
    /// Analog FM video transmitter, 200 kHz, continuous.
    Xpd,
}

impl EmissionClass {
    pub const COUNT: usize = 5;

    pub const ALL: [EmissionClass; Self::COUNT] = [
        EmissionClass::WiFi,
        EmissionClass::Bluetooth,
        EmissionClass::ZigBee,
        EmissionClass::Lightbridge,
        EmissionClass::Xpd,
    ];

    /// Stable numeric id used in annotation files and prediction tensors.
    pub fn class_id(self) -> u8 {
        match self {
            EmissionClass::WiFi => 0,
            EmissionClass::Bluetooth => 1,
            EmissionClass::ZigBee => 2,
            EmissionClass::Lightbridge => 3,
            EmissionClass::Xpd => 4,
        }
    }

    pub fn from_class_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    /// Occupied bandwidth in Hz used for synthesis and auto-labeling.
    pub fn nominal_bandwidth_hz(self) -> f64 {
        match self {
            EmissionClass::WiFi => 20e6,
            EmissionClass::Bluetooth => 1e6,
            EmissionClass::ZigBee => 2e6,
            EmissionClass::Lightbridge => 10e6,
            EmissionClass::Xpd => 0.2e6,
        }
    }

    /// Typical burst duration range in seconds. Continuous transmitters
    /// report `f64::INFINITY` as the upper bound; scene generators clamp
    /// to the frame length.
    pub fn typical_duration_range_s(self) -> (f64, f64) {
        match self {
            EmissionClass::WiFi => (0.0002, 0.0015),
            EmissionClass::Bluetooth => (0.0004, 0.0029),
            EmissionClass::ZigBee => (0.0005, 0.004),
            EmissionClass::Lightbridge => (0.001, f64::INFINITY),
            EmissionClass::Xpd => (0.005, f64::INFINITY),
        }
    }

    /// Continuous transmitters are on for the whole observation; bursty
    /// ones switch on and off within it. Scene generators give continuous
    /// classes full-frame duration.
    pub fn is_continuous(self) -> bool {
        matches!(self, EmissionClass::Xpd)
    }

    pub fn name(self) -> &'static str {
        match self {
            EmissionClass::WiFi => "WiFi",
            EmissionClass::Bluetooth => "Bluetooth",
            EmissionClass::ZigBee => "ZigBee",
            EmissionClass::Lightbridge => "Lightbridge",
            EmissionClass::Xpd => "XPD",
        }
    }
}

impl std::fmt::Display for EmissionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EmissionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wifi" => Ok(EmissionClass::WiFi),
            "bluetooth" | "bt" => Ok(EmissionClass::Bluetooth),
            "zigbee" => Ok(EmissionClass::ZigBee),
            "lightbridge" | "lb" => Ok(EmissionClass::Lightbridge),
            "xpd" => Ok(EmissionClass::Xpd),
            other => Err(format!("unknown emission class '{other}'")),
        }
    }
}

/// SNR buckets used for per-condition evaluation breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SnrBucket {
    Low,
    Mid,
    High,
}

impl SnrBucket {
    pub const ALL: [SnrBucket; 3] = [SnrBucket::Low, SnrBucket::Mid, SnrBucket::High];

    /// Half-open dB range `[lo, hi)` covered by this bucket.
    pub fn range_db(self) -> (f64, f64) {
        match self {
            SnrBucket::Low => (5.0, 15.0),
            SnrBucket::Mid => (15.0, 25.0),
            SnrBucket::High => (25.0, f64::INFINITY),
        }
    }

    /// Bucket containing `snr_db`, or `None` below the lowest bucket.
    pub fn of_snr_db(snr_db: f64) -> Option<Self> {
        match snr_db {
            s if s >= 25.0 => Some(SnrBucket::High),
            s if s >= 15.0 => Some(SnrBucket::Mid),
            s if s >= 5.0 => Some(SnrBucket::Low),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SnrBucket::Low => "Low",
            SnrBucket::Mid => "Mid",
            SnrBucket::High => "High",
        }
    }
}

impl std::fmt::Display for SnrBucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One emission to synthesize: what, where in frequency, when, how loud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionSpec {
    pub class: EmissionClass,
    /// Center frequency relative to the capture center, Hz. May be negative.
    pub center_offset_hz: f64,
    /// Burst start relative to the beginning of the recording, seconds.
    pub start_s: f64,
    pub duration_s: f64,
    /// Per-occupied-bin SNR over a 0 dB-per-sample noise floor.
    pub snr_db: f64,
    /// Overrides the class nominal bandwidth when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_hz: Option<f64>,
}

impl EmissionSpec {
    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
            .unwrap_or_else(|| self.class.nominal_bandwidth_hz())
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }
}

/// A baseband capture: samples plus enough context to interpret them.
#[derive(Debug, Clone)]
pub struct IqRecording {
    pub samples: Vec<Complex32>,
    pub sample_rate_hz: f64,
    /// Per-sample noise power in dB. `-inf` when no noise has been added.
    pub noise_power_db: f64,
    /// The emissions known to be present, in synthesis order.
    pub ground_truth: Vec<EmissionSpec>,
}

impl IqRecording {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Mean per-sample power, `sum |x|^2 / n`.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|s| s.norm_sqr() as f64).sum();
        sum / self.samples.len() as f64
    }
}

#[derive(Debug, Error)]
pub enum EmissionError {
    #[error("duration must be positive, got {0} s")]
    NonPositiveDuration(f64),
    #[error(
        "emission band [{lo_hz:.0}, {hi_hz:.0}] Hz exceeds Nyquist range ±{nyquist_hz:.0} Hz"
    )]
    BandExceedsNyquist {
        lo_hz: f64,
        hi_hz: f64,
        nyquist_hz: f64,
    },
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),
    #[error("no input recordings")]
    EmptyInput,
}

fn validate_spec(spec: &EmissionSpec, sample_rate_hz: f64) -> Result<(), EmissionError> {
    if !(spec.duration_s > 0.0) {
        return Err(EmissionError::NonPositiveDuration(spec.duration_s));
    }
    let half_bw = spec.bandwidth_hz() / 2.0;
    let nyquist = sample_rate_hz / 2.0;
    let lo = spec.center_offset_hz - half_bw;
    let hi = spec.center_offset_hz + half_bw;
    if lo < -nyquist || hi > nyquist {
        return Err(EmissionError::BandExceedsNyquist {
            lo_hz: lo,
            hi_hz: hi,
            nyquist_hz: nyquist,
        });
    }
    Ok(())
}

/// Signal total power that realizes `snr_db` per occupied analysis bin
/// over unit-power (0 dB per sample) noise, for any FFT size.
fn total_power_for_snr(snr_db: f64, bandwidth_hz: f64, sample_rate_hz: f64) -> f64 {
    10f64.powf(snr_db / 10.0) * bandwidth_hz / sample_rate_hz
}

/// Synthesizes one emission as complex baseband at `sample_rate_hz`.
///
/// The recording is `start_s + duration_s` long; the burst occupies its
/// tail. No noise is added; the returned `noise_power_db` is `-inf`.
/// Synthesis is deterministic in `(spec, sample_rate_hz, seed)`.
pub fn synthesize_emission(
    spec: &EmissionSpec,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<IqRecording, EmissionError> {
    validate_spec(spec, sample_rate_hz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_start = (spec.start_s.max(0.0) * sample_rate_hz).round() as usize;
    let n_burst = ((spec.duration_s * sample_rate_hz).round() as usize).max(1);

    let power = total_power_for_snr(spec.snr_db, spec.bandwidth_hz(), sample_rate_hz);
    let burst = match spec.class {
        EmissionClass::Xpd => synth_fm(spec, sample_rate_hz, power, n_burst, &mut rng),
        _ => synth_shaped_band(spec, sample_rate_hz, power, n_burst, &mut rng),
    };

    let mut samples = vec![Complex32::new(0.0, 0.0); n_start + n_burst];
    samples[n_start..].copy_from_slice(&burst);

    Ok(IqRecording {
        samples,
        sample_rate_hz,
        noise_power_db: f64::NEG_INFINITY,
        ground_truth: vec![spec.clone()],
    })
}

/// Band-limited burst built in the frequency domain: every occupied bin
/// gets the class spectral shape and an independent random phase, then one
/// inverse FFT produces the time series. All energy lands strictly inside
/// the declared band.
fn synth_shaped_band(
    spec: &EmissionSpec,
    sample_rate_hz: f64,
    power: f64,
    n_burst: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Complex32> {
    let bw = spec.bandwidth_hz();
    let half_bw = bw / 2.0;
    let bin_hz = sample_rate_hz / n_burst as f64;

    let mut bins = vec![Complex32::new(0.0, 0.0); n_burst];
    let mut shape_energy = 0.0f64;
    for k in 0..n_burst {
        // Signed bin index: frequencies in [-fs/2, fs/2).
        let signed = if k < n_burst.div_ceil(2) {
            k as isize
        } else {
            k as isize - n_burst as isize
        };
        let f = signed as f64 * bin_hz;
        let df = f - spec.center_offset_hz;
        if df.abs() > half_bw {
            continue;
        }
        let amp = match spec.class {
            // Gaussian PSD, -3 dB at the band edges.
            EmissionClass::Bluetooth => {
                (-0.5 * std::f64::consts::LN_2 * (df / half_bw).powi(2)).exp()
            }
            // Half-sine PSD falling to zero at the band edges.
            EmissionClass::ZigBee => (PI * df / bw).cos().max(0.0),
            // Flat occupancy.
            _ => 1.0,
        };
        if amp <= 0.0 {
            continue;
        }
        let phase = rng.random_range(0.0..(2.0 * PI));
        bins[k] = Complex32::new(
            (amp * phase.cos()) as f32,
            (amp * phase.sin()) as f32,
        );
        shape_energy += amp * amp;
    }

    if shape_energy == 0.0 {
        // Band narrower than one synthesis bin: fall back to the single
        // nearest bin so the burst still exists.
        let k = ((spec.center_offset_hz / bin_hz).round() as isize).rem_euclid(n_burst as isize);
        let phase = rng.random_range(0.0..(2.0 * PI));
        bins[k as usize] = Complex32::new(phase.cos() as f32, phase.sin() as f32);
        shape_energy = 1.0;
    }

    let mut time = bins;
    let fft = rustfft::FftPlanner::<f32>::new().plan_fft_inverse(n_burst);
    fft.process(&mut time);

    // Unnormalized inverse FFT: summing over the burst, Parseval gives
    // total energy n * shape_energy, so the mean per-sample power is
    // exactly shape_energy. Scale so the realized mean burst power is
    // exactly `power`, removing estimator variance from the calibration.
    let scale = (power / shape_energy).sqrt() as f32;
    for s in &mut time {
        *s *= scale;
    }
    time
}

/// Constant-envelope FM burst for the analog video class: a slow
/// multi-tone modulator swings the instantaneous frequency across the
/// middle of the declared band.
fn synth_fm(
    spec: &EmissionSpec,
    sample_rate_hz: f64,
    power: f64,
    n_burst: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Complex32> {
    let bw = spec.bandwidth_hz();
    // Peak deviation stays at a quarter bandwidth so the occupied spectrum
    // (deviation plus modulation sidebands) remains inside the band.
    let deviation_hz = 0.25 * bw;

    const TONES: usize = 3;
    let mut tone_hz = [0.0f64; TONES];
    let mut tone_amp = [0.0f64; TONES];
    let mut tone_phase = [0.0f64; TONES];
    let mut amp_sum = 0.0;
    for i in 0..TONES {
        // Log-uniform audio-rate tones, a crude stand-in for video content.
        let log_f = rng.random_range(3.0f64.ln()..12.0f64.ln());
        tone_hz[i] = log_f.exp() * 1e3;
        tone_amp[i] = rng.random_range(0.4..1.0);
        tone_phase[i] = rng.random_range(0.0..(2.0 * PI));
        amp_sum += tone_amp[i];
    }
    for a in &mut tone_amp {
        *a /= amp_sum;
    }

    let amplitude = power.sqrt() as f32;
    let carrier_phase = rng.random_range(0.0..(2.0 * PI));
    let mut phase = carrier_phase;
    let dt = 1.0 / sample_rate_hz;
    let mut out = Vec::with_capacity(n_burst);
    for n in 0..n_burst {
        let t = n as f64 * dt;
        let mut m = 0.0;
        for i in 0..TONES {
            m += tone_amp[i] * (2.0 * PI * tone_hz[i] * t + tone_phase[i]).sin();
        }
        let f_inst = spec.center_offset_hz + deviation_hz * m;
        phase += 2.0 * PI * f_inst * dt;
        out.push(Complex32::new(
            (amplitude as f64 * phase.cos()) as f32,
            (amplitude as f64 * phase.sin()) as f32,
        ));
    }
    out
}

/// Adds circular complex AWGN of the given per-sample power (dB).
///
/// Deterministic in `(rec, noise_power_db, seed)`. The recording's
/// `noise_power_db` becomes the power sum of old and new noise.
pub fn add_awgn(rec: &IqRecording, noise_power_db: f64, seed: u64) -> IqRecording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_power = 10f64.powf(noise_power_db / 10.0);
    // Per-component std dev: total complex power splits across I and Q.
    let sigma = (noise_power / 2.0).sqrt() as f32;

    let mut out = rec.clone();
    for s in &mut out.samples {
        let re: f32 = StandardNormal.sample(&mut rng);
        let im: f32 = StandardNormal.sample(&mut rng);
        *s += Complex32::new(re * sigma, im * sigma);
    }
    out.noise_power_db = power_sum_db(rec.noise_power_db, noise_power_db);
    out
}

fn power_sum_db(a_db: f64, b_db: f64) -> f64 {
    let a = if a_db.is_finite() {
        10f64.powf(a_db / 10.0)
    } else {
        0.0
    };
    let b = if b_db.is_finite() {
        10f64.powf(b_db / 10.0)
    } else {
        0.0
    };
    if a + b > 0.0 {
        10.0 * (a + b).log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Sums recordings sample-wise into one scene.
///
/// Shorter inputs are zero-padded to the longest. Ground truth lists are
/// concatenated in input order and noise floors add in linear power.
pub fn combine_recordings(recs: &[IqRecording]) -> Result<IqRecording, EmissionError> {
    let first = recs.first().ok_or(EmissionError::EmptyInput)?;
    let rate = first.sample_rate_hz;
    for r in recs {
        if r.sample_rate_hz != rate {
            return Err(EmissionError::SampleRateMismatch(rate, r.sample_rate_hz));
        }
    }

    let len = recs.iter().map(|r| r.samples.len()).max().unwrap_or(0);
    let mut samples = vec![Complex32::new(0.0, 0.0); len];
    let mut ground_truth = Vec::new();
    let mut noise_db = f64::NEG_INFINITY;
    for r in recs {
        for (acc, s) in samples.iter_mut().zip(&r.samples) {
            *acc += *s;
        }
        ground_truth.extend(r.ground_truth.iter().cloned());
        noise_db = power_sum_db(noise_db, r.noise_power_db);
    }

    Ok(IqRecording {
        samples,
        sample_rate_hz: rate,
        noise_power_db: noise_db,
        ground_truth,
    })
}

/// Rescales the signal so every ground-truth SNR moves by `delta_db`.
///
/// Only meaningful on noise-free recordings (the scale would move the
/// noise floor along with the signal otherwise).
pub fn scale_snr(rec: &IqRecording, delta_db: f64) -> IqRecording {
    let scale = 10f64.powf(delta_db / 20.0) as f32;
    let mut out = rec.clone();
    for s in &mut out.samples {
        *s *= scale;
    }
    for g in &mut out.ground_truth {
        g.snr_db += delta_db;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(class: EmissionClass, snr_db: f64) -> EmissionSpec {
        EmissionSpec {
            class,
            center_offset_hz: 5e6,
            start_s: 0.0,
            duration_s: 0.001,
            snr_db,
            bandwidth_hz: None,
        }
    }

    #[test]
    fn class_ids_are_stable() {
        let ids: Vec<u8> = EmissionClass::ALL.iter().map(|c| c.class_id()).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        for c in EmissionClass::ALL {
            assert_eq!(EmissionClass::from_class_id(c.class_id()), Some(c));
        }
        assert_eq!(EmissionClass::from_class_id(5), None);
    }

    #[test]
    fn snr_buckets_partition_the_axis() {
        assert_eq!(SnrBucket::of_snr_db(5.0), Some(SnrBucket::Low));
        assert_eq!(SnrBucket::of_snr_db(14.999), Some(SnrBucket::Low));
        assert_eq!(SnrBucket::of_snr_db(15.0), Some(SnrBucket::Mid));
        assert_eq!(SnrBucket::of_snr_db(25.0), Some(SnrBucket::High));
        assert_eq!(SnrBucket::of_snr_db(80.0), Some(SnrBucket::High));
        assert_eq!(SnrBucket::of_snr_db(4.999), None);
    }

    #[test]
    fn synthesis_is_deterministic_in_seed() {
        let s = spec(EmissionClass::ZigBee, 20.0);
        let a = synthesize_emission(&s, 100e6, 7).unwrap();
        let b = synthesize_emission(&s, 100e6, 7).unwrap();
        let c = synthesize_emission(&s, 100e6, 8).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn burst_total_power_matches_snr_calibration() {
        for class in [
            EmissionClass::WiFi,
            EmissionClass::Bluetooth,
            EmissionClass::ZigBee,
            EmissionClass::Lightbridge,
        ] {
            let s = spec(class, 20.0);
            let rec = synthesize_emission(&s, 100e6, 3).unwrap();
            let want = total_power_for_snr(20.0, s.bandwidth_hz(), 100e6);
            let got = rec.mean_power();
            assert!(
                (got / want - 1.0).abs() < 1e-3,
                "{class}: power {got} vs {want}"
            );
        }
    }

    #[test]
    fn fm_burst_power_matches_calibration_closely() {
        // Constant envelope: realized power equals the target up to f32
        // rounding, no averaging needed.
        let s = spec(EmissionClass::Xpd, 30.0);
        let rec = synthesize_emission(&s, 100e6, 11).unwrap();
        let want = total_power_for_snr(30.0, s.bandwidth_hz(), 100e6);
        assert!((rec.mean_power() / want - 1.0).abs() < 1e-3);
    }

    #[test]
    fn start_offset_produces_leading_silence() {
        let s = EmissionSpec {
            start_s: 10e-6,
            ..spec(EmissionClass::Bluetooth, 15.0)
        };
        let rec = synthesize_emission(&s, 100e6, 1).unwrap();
        let n_start = (10e-6 * 100e6) as usize;
        assert_eq!(rec.samples.len(), n_start + (0.001 * 100e6) as usize);
        assert!(rec.samples[..n_start].iter().all(|s| s.norm_sqr() == 0.0));
        assert!(rec.samples[n_start..].iter().any(|s| s.norm_sqr() > 0.0));
    }

    #[test]
    fn rejects_band_past_nyquist() {
        let s = EmissionSpec {
            center_offset_hz: 45e6,
            ..spec(EmissionClass::WiFi, 20.0)
        };
        let err = synthesize_emission(&s, 100e6, 0).unwrap_err();
        assert!(matches!(err, EmissionError::BandExceedsNyquist { .. }));
    }

    #[test]
    fn rejects_non_positive_duration() {
        let s = EmissionSpec {
            duration_s: 0.0,
            ..spec(EmissionClass::WiFi, 20.0)
        };
        assert!(matches!(
            synthesize_emission(&s, 100e6, 0),
            Err(EmissionError::NonPositiveDuration(_))
        ));
    }

    #[test]
    fn awgn_power_is_calibrated() {
        let silent = IqRecording {
            samples: vec![Complex32::new(0.0, 0.0); 200_000],
            sample_rate_hz: 100e6,
            noise_power_db: f64::NEG_INFINITY,
            ground_truth: vec![],
        };
        let noisy = add_awgn(&silent, 0.0, 42);
        assert!((noisy.mean_power() - 1.0).abs() < 0.02);
        assert_eq!(noisy.noise_power_db, 0.0);

        let hot = add_awgn(&silent, 6.0, 43);
        assert!((10.0 * hot.mean_power().log10() - 6.0).abs() < 0.1);
    }

    #[test]
    fn awgn_stacks_in_linear_power() {
        let silent = IqRecording {
            samples: vec![Complex32::new(0.0, 0.0); 100_000],
            sample_rate_hz: 100e6,
            noise_power_db: f64::NEG_INFINITY,
            ground_truth: vec![],
        };
        let twice = add_awgn(&add_awgn(&silent, 0.0, 1), 0.0, 2);
        // 0 dB + 0 dB = +3.01 dB.
        assert!((twice.noise_power_db - 3.0103).abs() < 1e-3);
        assert!((10.0 * twice.mean_power().log10() - 3.0103).abs() < 0.1);
    }

    #[test]
    fn combine_zero_pads_and_concatenates_truth() {
        let a = synthesize_emission(&spec(EmissionClass::Bluetooth, 15.0), 100e6, 1).unwrap();
        let b = synthesize_emission(
            &EmissionSpec {
                duration_s: 0.002,
                center_offset_hz: -8e6,
                ..spec(EmissionClass::ZigBee, 18.0)
            },
            100e6,
            2,
        )
        .unwrap();
        let both = combine_recordings(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(both.samples.len(), b.samples.len());
        assert_eq!(both.ground_truth.len(), 2);
        assert_eq!(both.ground_truth[0], a.ground_truth[0]);
        assert_eq!(both.ground_truth[1], b.ground_truth[0]);
        // Where only b is live the sum equals b.
        assert_eq!(
            &both.samples[a.samples.len()..],
            &b.samples[a.samples.len()..]
        );
    }

    #[test]
    fn combine_rejects_mixed_rates_and_empty_input() {
        let a = synthesize_emission(&spec(EmissionClass::WiFi, 20.0), 100e6, 1).unwrap();
        let b = synthesize_emission(&spec(EmissionClass::WiFi, 20.0), 50e6, 1).unwrap();
        assert!(matches!(
            combine_recordings(&[a, b]),
            Err(EmissionError::SampleRateMismatch(_, _))
        ));
        assert!(matches!(
            combine_recordings(&[]),
            Err(EmissionError::EmptyInput)
        ));
    }

    #[test]
    fn scale_snr_moves_power_and_truth_together() {
        let rec = synthesize_emission(&spec(EmissionClass::WiFi, 20.0), 100e6, 5).unwrap();
        let scaled = scale_snr(&rec, 6.0);
        assert!((scaled.ground_truth[0].snr_db - 26.0).abs() < 1e-12);
        let ratio_db = 10.0 * (scaled.mean_power() / rec.mean_power()).log10();
        assert!((ratio_db - 6.0).abs() < 1e-3);
    }
}
