//! Wideband spectro-temporal RF identification toolkit.
//!
//! Everything needed to go from raw I/Q sample streams to detected,
//! classified and scored emissions on time-frequency images:
//!
//! * [`emission`] — parametric synthesis of 2.4 GHz-style emissions,
//!   AWGN, time-domain combination and SNR scaling.
//! * [`spectral`] — chunked FFT, noise-floor referencing, SNR-to-grayscale
//!   mapping and the two-stage max/min/avg compression that produces RGB
//!   spectrogram images.
//! * [`dataset`] — on-disk dataset layout (recordings + JSON metadata,
//!   images + annotation files, global config), image-space augmentation
//!   and deterministic splits.
//! * [`detector`] — IoU utilities, k-means anchor clustering, NMS,
//!   prediction-tensor decode, the convolution filter-volume schedule and
//!   a classical connected-component baseline detector.
//! * [`evaluator`] — greedy IoU matching, per-class average precision and
//!   mAP reports bucketed by SNR.
//! * [`imgio`] — PGM/PPM/PNG readers and writers (PGM/PPM are the
//!   bit-exact reference formats).

pub mod dataset;
pub mod detector;
pub mod emission;
pub mod evaluator;
pub mod imgio;
pub mod spectral;

pub use emission::{EmissionClass, EmissionSpec, IqRecording, SnrBucket};
pub use spectral::{
    CompressionConfig, FrameGeometry, GrayImage, MappingConfig, PipelineConfig, RgbImage,
};

pub use dataset::{Annotation, BoundingBox};
pub use detector::Detection;
