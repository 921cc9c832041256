//! Recording files and their JSON sidecar metadata.
//!
//! I/Q files are headerless interleaved little-endian `f32` pairs, eight
//! bytes per complex sample. Everything needed to interpret them lives in
//! the sidecar.

use super::DatasetError;
use crate::emission::{EmissionSpec, IqRecording};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectingMethod {
    /// Captured off the air.
    Recorded,
    /// Produced or altered at the signal level.
    RfManipulation,
    /// Produced or altered at the image level.
    ImageManipulation,
}

/// Sidecar metadata for one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMetadata {
    /// Capture or generation date, `YYYY-MM-DD`.
    pub date: String,
    pub duration_s: f64,
    /// Emission class names present, deduplicated, in class-id order.
    pub rf_categories: Vec<String>,
    /// Center offsets (Hz) of the emissions present.
    pub channels: Vec<f64>,
    pub center_frequency_hz: f64,
    pub sample_rate_hz: f64,
    /// Per-emission SNR in dB, aligned with `ground_truth`.
    pub snr_db: Vec<f64>,
    /// `-inf` for a noiseless recording, stored as JSON `null`.
    #[serde(with = "db_or_null")]
    pub noise_power_db: f64,
    pub file_name: String,
    pub file_size_bytes: u64,
    pub collecting_method: CollectingMethod,
    pub ground_truth: Vec<EmissionSpec>,
}

/// JSON has no number for `-inf`; serde_json would emit `null` and then
/// refuse to read it back into an `f64`. Map the one non-finite value we
/// produce to `null` explicitly, both ways.
mod db_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Context that cannot be derived from the samples themselves.
#[derive(Debug, Clone)]
pub struct MetadataContext {
    pub file_name: String,
    pub center_frequency_hz: f64,
    pub collecting_method: CollectingMethod,
    /// Defaults to today (UTC) when `None`.
    pub date: Option<String>,
}

/// Assembles the sidecar for a recording.
pub fn metadata_for(rec: &IqRecording, ctx: &MetadataContext) -> RecordingMetadata {
    let mut categories = BTreeSet::new();
    for g in &rec.ground_truth {
        categories.insert(g.class);
    }
    RecordingMetadata {
        date: ctx
            .date
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().format("%Y-%m-%d").to_string()),
        duration_s: rec.duration_s(),
        rf_categories: categories.iter().map(|c| c.name().to_string()).collect(),
        channels: rec.ground_truth.iter().map(|g| g.center_offset_hz).collect(),
        center_frequency_hz: ctx.center_frequency_hz,
        sample_rate_hz: rec.sample_rate_hz,
        snr_db: rec.ground_truth.iter().map(|g| g.snr_db).collect(),
        noise_power_db: rec.noise_power_db,
        file_name: ctx.file_name.clone(),
        file_size_bytes: (rec.samples.len() * 8) as u64,
        collecting_method: ctx.collecting_method,
        ground_truth: rec.ground_truth.clone(),
    }
}

pub fn write_metadata(path: &Path, meta: &RecordingMetadata) -> Result<(), DatasetError> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, meta)?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<RecordingMetadata, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes samples as interleaved little-endian `f32` I/Q pairs.
pub fn write_iq(path: &Path, samples: &[Complex32]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut buf = Vec::with_capacity(8 * 1024);
    for s in samples {
        buf.extend_from_slice(&s.re.to_le_bytes());
        buf.extend_from_slice(&s.im.to_le_bytes());
        if buf.len() >= 8 * 1024 {
            w.write_all(&buf)?;
            buf.clear();
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads an I/Q file. The byte length must be a multiple of 8.
pub fn read_iq(path: &Path, sample_rate_hz: f64) -> Result<IqRecording, DatasetError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(DatasetError::TruncatedIq(bytes.len() % 8));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    Ok(IqRecording {
        samples,
        sample_rate_hz,
        noise_power_db: f64::NEG_INFINITY,
        ground_truth: vec![],
    })
}

/// Loads a recording together with its sidecar, restoring sample rate,
/// noise floor and ground truth.
pub fn read_recording_with_metadata(
    iq_path: &Path,
    meta_path: &Path,
) -> Result<(IqRecording, RecordingMetadata), DatasetError> {
    let meta = read_metadata(meta_path)?;
    let mut rec = read_iq(iq_path, meta.sample_rate_hz)?;
    rec.noise_power_db = meta.noise_power_db;
    rec.ground_truth = meta.ground_truth.clone();
    Ok((rec, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emission::EmissionClass;
    use tempfile::tempdir;

    fn sample_recording() -> IqRecording {
        IqRecording {
            samples: vec![Complex32::new(1.0, -0.5), Complex32::new(0.25, 2.0)],
            sample_rate_hz: 100e6,
            noise_power_db: 0.0,
            ground_truth: vec![
                EmissionSpec {
                    class: EmissionClass::Bluetooth,
                    center_offset_hz: -3e6,
                    start_s: 0.0,
                    duration_s: 1e-3,
                    snr_db: 18.0,
                    bandwidth_hz: None,
                },
                EmissionSpec {
                    class: EmissionClass::WiFi,
                    center_offset_hz: 10e6,
                    start_s: 2e-4,
                    duration_s: 8e-4,
                    snr_db: 27.0,
                    bandwidth_hz: None,
                },
            ],
        }
    }

    #[test]
    fn iq_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.iq");
        let rec = sample_recording();
        write_iq(&path, &rec.samples).unwrap();
        let back = read_iq(&path, 100e6).unwrap();
        assert_eq!(back.samples, rec.samples);
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            rec.samples.len() as u64 * 8
        );
    }

    #[test]
    fn truncated_iq_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.iq");
        std::fs::write(&path, [0u8; 13]).unwrap();
        assert!(matches!(
            read_iq(&path, 1.0),
            Err(DatasetError::TruncatedIq(5))
        ));
    }

    #[test]
    fn metadata_fields_describe_the_recording() {
        let rec = sample_recording();
        let meta = metadata_for(
            &rec,
            &MetadataContext {
                file_name: "rec_000001.iq".into(),
                center_frequency_hz: 2.44e9,
                collecting_method: CollectingMethod::RfManipulation,
                date: Some("2026-01-15".into()),
            },
        );
        assert_eq!(meta.date, "2026-01-15");
        assert_eq!(meta.rf_categories, vec!["WiFi", "Bluetooth"]);
        assert_eq!(meta.channels, vec![-3e6, 10e6]);
        assert_eq!(meta.snr_db, vec![18.0, 27.0]);
        assert_eq!(meta.file_size_bytes, 16);
        assert!((meta.duration_s - 2.0 / 100e6).abs() < 1e-18);
    }

    #[test]
    fn metadata_json_has_expected_keys() {
        let rec = sample_recording();
        let meta = metadata_for(
            &rec,
            &MetadataContext {
                file_name: "r.iq".into(),
                center_frequency_hz: 2.44e9,
                collecting_method: CollectingMethod::Recorded,
                date: Some("2026-01-15".into()),
            },
        );
        let value: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&meta).unwrap()).unwrap();
        let obj = value.as_object().unwrap();
        for key in [
            "date",
            "duration_s",
            "rf_categories",
            "channels",
            "center_frequency_hz",
            "sample_rate_hz",
            "snr_db",
            "noise_power_db",
            "file_name",
            "file_size_bytes",
            "collecting_method",
            "ground_truth",
        ] {
            assert!(obj.contains_key(key), "missing key {key}");
        }
        assert_eq!(obj["collecting_method"], "recorded");
    }

    #[test]
    fn metadata_roundtrip_through_disk() {
        let dir = tempdir().unwrap();
        let iq = dir.path().join("r.iq");
        let json = dir.path().join("r.json");
        let rec = sample_recording();
        write_iq(&iq, &rec.samples).unwrap();
        let meta = metadata_for(
            &rec,
            &MetadataContext {
                file_name: "r.iq".into(),
                center_frequency_hz: 2.44e9,
                collecting_method: CollectingMethod::RfManipulation,
                date: None,
            },
        );
        write_metadata(&json, &meta).unwrap();
        let (back, meta2) = read_recording_with_metadata(&iq, &json).unwrap();
        assert_eq!(meta2, meta);
        assert_eq!(back.samples, rec.samples);
        assert_eq!(back.ground_truth, rec.ground_truth);
        assert_eq!(back.noise_power_db, 0.0);
    }

    #[test]
    fn noiseless_recording_roundtrips_as_null() {
        let mut rec = sample_recording();
        rec.noise_power_db = f64::NEG_INFINITY;
        let meta = metadata_for(
            &rec,
            &MetadataContext {
                file_name: "r.iq".into(),
                center_frequency_hz: 2.44e9,
                collecting_method: CollectingMethod::RfManipulation,
                date: None,
            },
        );
        let text = serde_json::to_string(&meta).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["noise_power_db"].is_null());
        let back: RecordingMetadata = serde_json::from_str(&text).unwrap();
        assert_eq!(back.noise_power_db, f64::NEG_INFINITY);
    }
}
