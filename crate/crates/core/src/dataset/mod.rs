//! Dataset tooling: annotation files, recording metadata, image-space
//! augmentation, deterministic builds and splits.
//!
//! On-disk layout of a dataset root:
//!
//! ```text
//! root/
//!   global.json            pipeline + capture configuration
//!   recordings/            raw I/Q (.iq) + per-recording metadata (.json)
//!   pictures/              rendered frames (.pgm/.ppm/.png) + labels (.txt)
//! ```
//!
//! Annotation files are one emission per line,
//! `<class_id> <x_center> <y_center> <width> <height>`, all coordinates
//! normalized to [0, 1] with x along frequency and y along time.

mod augment;
mod build;
mod metadata;

pub use augment::{
    augment_brightness, augment_collide, augment_length, augment_move, extract_prototype,
    AugmentCanvas, EmissionPrototype,
};
pub use build::{
    build_dataset, load_manifest, split_dataset, split_indices, validate_dataset,
    DatasetManifest, GlobalConfig, ImageKind, PictureEntry, RecordingEntry, ScenarioConfig,
    ValidationReport,
};
pub use metadata::{
    metadata_for, read_iq, read_metadata, read_recording_with_metadata, write_iq,
    write_metadata, CollectingMethod, MetadataContext, RecordingMetadata,
};

use crate::emission::{EmissionClass, EmissionSpec};
use crate::spectral::FrameGeometry;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error("truncated I/Q file: {0} trailing bytes")]
    TruncatedIq(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error(transparent)]
    Emission(#[from] crate::emission::EmissionError),
    #[error(transparent)]
    Image(#[from] crate::imgio::ImageIoError),
}

/// Axis-aligned box in normalized image coordinates (center + extent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(x_center: f64, y_center: f64, width: f64, height: f64) -> Self {
        Self {
            x_center,
            y_center,
            width,
            height,
        }
    }

    /// Builds from edges, returning `None` for empty extents.
    pub fn from_edges(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Option<Self> {
        if x_max <= x_min || y_max <= y_min {
            return None;
        }
        Some(Self {
            x_center: 0.5 * (x_min + x_max),
            y_center: 0.5 * (y_min + y_max),
            width: x_max - x_min,
            height: y_max - y_min,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_center - self.width / 2.0
    }

    pub fn x_max(&self) -> f64 {
        self.x_center + self.width / 2.0
    }

    pub fn y_min(&self) -> f64 {
        self.y_center - self.height / 2.0
    }

    pub fn y_max(&self) -> f64 {
        self.y_center + self.height / 2.0
    }

    pub fn area(&self) -> f64 {
        (self.width * self.height).max(0.0)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max().min(other.x_max()) - self.x_min().max(other.x_min());
        let h = self.y_max().min(other.y_max()) - self.y_min().max(other.y_min());
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn overlaps(&self, other: &BoundingBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// Clips to the unit square; `None` if nothing is left.
    pub fn clip_unit(&self) -> Option<Self> {
        Self::from_edges(
            self.x_min().max(0.0),
            self.y_min().max(0.0),
            self.x_max().min(1.0),
            self.y_max().min(1.0),
        )
    }

    fn valid_normalized(&self) -> Result<(), String> {
        const EPS: f64 = 1e-6;
        for (name, v) in [
            ("x_center", self.x_center),
            ("y_center", self.y_center),
            ("width", self.width),
            ("height", self.height),
        ] {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        if self.width <= 0.0 || self.height <= 0.0 {
            return Err("box extent must be positive".into());
        }
        if self.x_min() < -EPS
            || self.y_min() < -EPS
            || self.x_max() > 1.0 + EPS
            || self.y_max() > 1.0 + EPS
        {
            return Err("box exceeds the unit square".into());
        }
        Ok(())
    }
}

/// One labeled emission on an image. `snr_db` travels with in-memory
/// labels for bucketed evaluation but is not part of the text format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class: EmissionClass,
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

/// Computes the ground-truth box for an emission on a rendered frame.
///
/// Returns `None` when the emission lies entirely outside the frame's
/// time span. Boxes are clipped to the unit square.
pub fn auto_label(spec: &EmissionSpec, geom: &FrameGeometry) -> Option<Annotation> {
    let span = geom.time_span_s();
    let half_bw = spec.bandwidth_hz() / 2.0;
    let x_min = geom.offset_hz_to_x(spec.center_offset_hz - half_bw);
    let x_max = geom.offset_hz_to_x(spec.center_offset_hz + half_bw);
    let y_min = spec.start_s / span;
    let y_max = spec.end_s() / span;
    let bbox = BoundingBox::from_edges(x_min, y_min, x_max, y_max)?.clip_unit()?;
    Some(Annotation {
        class: spec.class,
        bbox,
        snr_db: Some(spec.snr_db),
    })
}

/// Serializes annotations in the one-line-per-box text format.
pub fn format_annotations(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6}",
            a.class.class_id(),
            a.bbox.x_center,
            a.bbox.y_center,
            a.bbox.width,
            a.bbox.height
        )
        .expect("string write cannot fail");
    }
    out
}

pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<(), DatasetError> {
    std::fs::write(path, format_annotations(annotations))?;
    Ok(())
}

/// Parses an annotation file, reporting the 1-based line number of the
/// first malformed line.
pub fn parse_annotations(text: &str, origin: &str) -> Result<Vec<Annotation>, DatasetError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_annotation_line(line, origin, idx + 1)?);
    }
    Ok(out)
}

fn parse_annotation_line(
    line: &str,
    origin: &str,
    line_no: usize,
) -> Result<Annotation, DatasetError> {
    let err = |reason: String| DatasetError::MalformedLine {
        path: origin.to_string(),
        line: line_no,
        reason,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    }
    let id: u8 = fields[0]
        .parse()
        .map_err(|_| err(format!("bad class id '{}'", fields[0])))?;
    let class = EmissionClass::from_class_id(id)
        .ok_or_else(|| err(format!("class id {id} out of range 0..={}", EmissionClass::COUNT - 1)))?;
    let mut nums = [0.0f64; 4];
    for (i, f) in fields[1..].iter().enumerate() {
        nums[i] = f
            .parse()
            .map_err(|_| err(format!("bad coordinate '{f}'")))?;
    }
    let bbox = BoundingBox::new(nums[0], nums[1], nums[2], nums[3]);
    bbox.valid_normalized().map_err(err)?;
    Ok(Annotation {
        class,
        bbox,
        snr_db: None,
    })
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    parse_annotations(&text, &path.display().to_string())
}
