//! Scenario-driven dataset generation, directory scanning, validation and
//! deterministic splits.

use super::metadata::{metadata_for, read_metadata, write_iq, write_metadata};
use super::{auto_label, read_annotations, write_annotations, Annotation, DatasetError};
use crate::dataset::{CollectingMethod, MetadataContext};
use crate::emission::{
    add_awgn, combine_recordings, synthesize_emission, EmissionClass, EmissionSpec,
    SnrBucket,
};
use crate::imgio;
use crate::spectral::{render_gray, render_rgb, FrameGeometry, PipelineConfig};
use num_complex::Complex32;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    /// One FFT row per image row, single channel.
    Gray,
    /// Two-stage compressed max/min/avg channels.
    Rgb,
}

impl std::str::FromStr for ImageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gray" | "grey" => Ok(ImageKind::Gray),
            "rgb" => Ok(ImageKind::Rgb),
            other => Err(format!("unknown image kind '{other}'")),
        }
    }
}

/// Pipeline and capture configuration shared by a whole dataset, stored
/// as `global.json` in the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalConfig {
    pub sample_rate_hz: f64,
    pub center_frequency_hz: f64,
    pub fft_size: usize,
    pub image_rows: usize,
    pub m1: usize,
    pub m2: usize,
    pub a_min_db: f64,
    pub a_max_db: f64,
    pub image_kind: ImageKind,
    pub classes: Vec<String>,
}

impl GlobalConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            fft_size: self.fft_size,
            image_rows: self.image_rows,
            mapping: crate::spectral::MappingConfig {
                a_min_db: self.a_min_db,
                a_max_db: self.a_max_db,
            },
            compression: crate::spectral::CompressionConfig {
                m1: self.m1,
                m2: self.m2,
            },
            noise_floor: crate::spectral::NoiseFloorRef::Auto,
        }
    }

    pub fn geometry(&self) -> FrameGeometry {
        match self.image_kind {
            ImageKind::Gray => FrameGeometry::gray(self.sample_rate_hz, &self.pipeline()),
            ImageKind::Rgb => FrameGeometry::rgb(self.sample_rate_hz, &self.pipeline()),
        }
    }
}

fn default_sample_rate() -> f64 {
    100e6
}

fn default_center_frequency() -> f64 {
    2.44e9
}

fn default_classes() -> Vec<EmissionClass> {
    EmissionClass::ALL.to_vec()
}

fn default_image_kind() -> ImageKind {
    ImageKind::Gray
}

/// Declarative description of a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub images: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_image_kind")]
    pub image_kind: ImageKind,
    /// Classes to draw from, cycled so counts stay balanced.
    #[serde(default = "default_classes")]
    pub classes: Vec<EmissionClass>,
    /// Draw SNRs from a named bucket...
    #[serde(default)]
    pub snr_bucket: Option<SnrBucket>,
    /// ...or from an explicit range (bucket wins when both are set).
    #[serde(default)]
    pub snr_range_db: Option<(f64, f64)>,
    /// Fraction of images that carry a second, overlapping emission.
    #[serde(default)]
    pub collision_fraction: f64,
    /// Also write raw I/Q and metadata next to the images.
    #[serde(default)]
    pub write_recordings: bool,
    /// Write PNG instead of PGM/PPM.
    #[serde(default)]
    pub png: bool,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_center_frequency")]
    pub center_frequency_hz: f64,
}

impl ScenarioConfig {
    pub fn new(images: usize) -> Self {
        Self {
            images,
            seed: 0,
            image_kind: ImageKind::Gray,
            classes: default_classes(),
            snr_bucket: None,
            snr_range_db: None,
            collision_fraction: 0.0,
            write_recordings: false,
            png: false,
            sample_rate_hz: default_sample_rate(),
            center_frequency_hz: default_center_frequency(),
        }
    }

    fn snr_range(&self) -> (f64, f64) {
        if let Some(bucket) = self.snr_bucket {
            let (lo, hi) = bucket.range_db();
            // The top bucket is open-ended; 40 dB is plenty above the floor.
            return (lo, if hi.is_finite() { hi } else { 40.0 });
        }
        self.snr_range_db.unwrap_or((5.0, 40.0))
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if self.images == 0 {
            return Err(DatasetError::BadScenario("images must be >= 1".into()));
        }
        if self.classes.is_empty() {
            return Err(DatasetError::BadScenario("classes must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.collision_fraction) {
            return Err(DatasetError::BadScenario(format!(
                "collision_fraction must be in [0, 1], got {}",
                self.collision_fraction
            )));
        }
        let (lo, hi) = self.snr_range();
        if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
            return Err(DatasetError::BadScenario(format!(
                "empty SNR range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PictureEntry {
    pub image: PathBuf,
    pub annotations: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub iq: PathBuf,
    pub metadata: PathBuf,
}

/// Everything known about a dataset on disk.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub global: GlobalConfig,
    pub pictures: Vec<PictureEntry>,
    pub recordings: Vec<RecordingEntry>,
}

/// Draws one emission whose band and burst fit entirely inside the frame.
fn sample_spec(
    rng: &mut ChaCha8Rng,
    class: EmissionClass,
    snr_range: (f64, f64),
    geom: &FrameGeometry,
) -> EmissionSpec {
    let span = geom.time_span_s();
    let bw = class.nominal_bandwidth_hz();
    let (duration_s, start_s) = if class.is_continuous() {
        // Always-on transmitters cover the whole frame.
        (span, 0.0)
    } else {
        let (dur_lo, dur_hi) = class.typical_duration_range_s();
        let hi = if dur_hi.is_finite() {
            dur_hi.min(span)
        } else {
            span
        };
        let lo = dur_lo.min(hi);
        let duration_s = if lo < hi { rng.random_range(lo..hi) } else { hi };
        let start_s = if duration_s < span {
            rng.random_range(0.0..(span - duration_s))
        } else {
            0.0
        };
        (duration_s, start_s)
    };
    // Keep a small margin so the band never brushes the image edge. A
    // band as wide as the whole span can only sit at the center.
    let max_offset = ((geom.sample_rate_hz - bw) / 2.0 * 0.95).max(0.0);
    let center_offset_hz = if max_offset > 0.0 {
        rng.random_range(-max_offset..max_offset)
    } else {
        0.0
    };
    let snr_db = if snr_range.0 < snr_range.1 {
        rng.random_range(snr_range.0..snr_range.1)
    } else {
        snr_range.0
    };
    EmissionSpec {
        class,
        center_offset_hz,
        start_s,
        duration_s,
        snr_db,
        bandwidth_hz: None,
    }
}

/// Retries the partner draw until its box overlaps the primary's, so a
/// "collision" is a genuine co-channel event and not just a second box.
fn sample_overlapping_partner(
    rng: &mut ChaCha8Rng,
    classes: &[EmissionClass],
    snr_range: (f64, f64),
    geom: &FrameGeometry,
    primary: &Annotation,
) -> EmissionSpec {
    let mut last = None;
    for _ in 0..40 {
        let class = classes[rng.random_range(0..classes.len())];
        let spec = sample_spec(rng, class, snr_range, geom);
        if let Some(ann) = auto_label(&spec, geom) {
            if ann.bbox.overlaps(&primary.bbox) {
                return spec;
            }
            last = Some(spec);
        }
    }
    last.expect("at least one partner draw must label successfully")
}

struct BuiltImage {
    picture: PictureEntry,
    recording: Option<RecordingEntry>,
}

fn build_one_image(
    index: usize,
    scenario: &ScenarioConfig,
    pipeline: &PipelineConfig,
    root: &Path,
    collide: bool,
) -> Result<BuiltImage, DatasetError> {
    // Independent, stable stream per image.
    let mut rng =
        ChaCha8Rng::seed_from_u64(scenario.seed ^ (index as u64).wrapping_mul(0x9E3779B97F4A7C15));
    let geom = match scenario.image_kind {
        ImageKind::Gray => FrameGeometry::gray(scenario.sample_rate_hz, pipeline),
        ImageKind::Rgb => FrameGeometry::rgb(scenario.sample_rate_hz, pipeline),
    };
    let snr_range = scenario.snr_range();

    let primary_class = scenario.classes[index % scenario.classes.len()];
    let mut specs = vec![sample_spec(&mut rng, primary_class, snr_range, &geom)];
    if collide {
        let primary_ann = auto_label(&specs[0], &geom)
            .expect("sampled emissions always fit the frame");
        specs.push(sample_overlapping_partner(
            &mut rng,
            &scenario.classes,
            snr_range,
            &geom,
            &primary_ann,
        ));
    }

    let mut parts = Vec::with_capacity(specs.len());
    for spec in &specs {
        parts.push(synthesize_emission(
            spec,
            scenario.sample_rate_hz,
            rng.random(),
        )?);
    }
    let mut scene = combine_recordings(&parts)?;
    scene
        .samples
        .resize(geom.samples_per_image(), Complex32::new(0.0, 0.0));
    let scene = add_awgn(&scene, 0.0, rng.random());

    let annotations: Vec<Annotation> = scene
        .ground_truth
        .iter()
        .filter_map(|s| auto_label(s, &geom))
        .collect();

    let stem = format!("img_{index:06}");
    let (img_path, ann_path) = match (scenario.image_kind, scenario.png) {
        (ImageKind::Gray, false) => (format!("{stem}.pgm"), format!("{stem}.txt")),
        (ImageKind::Rgb, false) => (format!("{stem}.ppm"), format!("{stem}.txt")),
        (_, true) => (format!("{stem}.png"), format!("{stem}.txt")),
    };
    let img_path = root.join("pictures").join(img_path);
    let ann_path = root.join("pictures").join(ann_path);

    match scenario.image_kind {
        ImageKind::Gray => {
            let (img, _) = render_gray(&scene, pipeline)?;
            imgio::save_gray(&img_path, &img)?;
        }
        ImageKind::Rgb => {
            let (img, _) = render_rgb(&scene, pipeline)?;
            imgio::save_rgb(&img_path, &img)?;
        }
    }
    write_annotations(&ann_path, &annotations)?;

    let recording = if scenario.write_recordings {
        let iq_name = format!("rec_{index:06}.iq");
        let iq_path = root.join("recordings").join(&iq_name);
        let meta_path = root.join("recordings").join(format!("rec_{index:06}.json"));
        write_iq(&iq_path, &scene.samples)?;
        let meta = metadata_for(
            &scene,
            &MetadataContext {
                file_name: iq_name,
                center_frequency_hz: scenario.center_frequency_hz,
                collecting_method: CollectingMethod::RfManipulation,
                date: None,
            },
        );
        write_metadata(&meta_path, &meta)?;
        Some(RecordingEntry {
            iq: iq_path,
            metadata: meta_path,
        })
    } else {
        None
    };

    Ok(BuiltImage {
        picture: PictureEntry {
            image: img_path,
            annotations: ann_path,
        },
        recording,
    })
}

/// Generates a dataset under `root` according to the scenario.
///
/// Deterministic in the scenario seed. Exactly
/// `round(collision_fraction * images)` images carry a second emission
/// whose box overlaps the first.
pub fn build_dataset(
    scenario: &ScenarioConfig,
    pipeline: &PipelineConfig,
    root: &Path,
) -> Result<DatasetManifest, DatasetError> {
    scenario.validate()?;
    pipeline.validate()?;

    std::fs::create_dir_all(root.join("pictures"))?;
    if scenario.write_recordings {
        std::fs::create_dir_all(root.join("recordings"))?;
    }

    let n_collide = (scenario.collision_fraction * scenario.images as f64).round() as usize;
    // Spread collisions across the class cycle instead of front-loading.
    let collide_flags: Vec<bool> = (0..scenario.images)
        .map(|i| {
            let due_before = (n_collide * (i + 1)) / scenario.images;
            let due_at = (n_collide * i) / scenario.images;
            due_before > due_at
        })
        .collect();

    let built: Result<Vec<BuiltImage>, DatasetError> = (0..scenario.images)
        .into_par_iter()
        .map(|i| build_one_image(i, scenario, pipeline, root, collide_flags[i]))
        .collect();
    let built = built?;

    let global = GlobalConfig {
        sample_rate_hz: scenario.sample_rate_hz,
        center_frequency_hz: scenario.center_frequency_hz,
        fft_size: pipeline.fft_size,
        image_rows: pipeline.image_rows,
        m1: pipeline.compression.m1,
        m2: pipeline.compression.m2,
        a_min_db: pipeline.mapping.a_min_db,
        a_max_db: pipeline.mapping.a_max_db,
        image_kind: scenario.image_kind,
        classes: scenario.classes.iter().map(|c| c.name().to_string()).collect(),
    };
    std::fs::write(
        root.join("global.json"),
        serde_json::to_string_pretty(&global)?,
    )?;

    Ok(DatasetManifest {
        root: root.to_path_buf(),
        global,
        pictures: built.iter().map(|b| b.picture.clone()).collect(),
        recordings: built.into_iter().filter_map(|b| b.recording).collect(),
    })
}

/// Scans an existing dataset directory into a manifest.
pub fn load_manifest(root: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = std::fs::read_to_string(root.join("global.json"))?;
    let global: GlobalConfig = serde_json::from_str(&text)?;

    let mut pictures = Vec::new();
    let pictures_dir = root.join("pictures");
    if pictures_dir.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&pictures_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("pgm") | Some("ppm") | Some("png")
                )
            })
            .collect();
        paths.sort();
        for image in paths {
            let annotations = image.with_extension("txt");
            pictures.push(PictureEntry { image, annotations });
        }
    }

    let mut recordings = Vec::new();
    let recordings_dir = root.join("recordings");
    if recordings_dir.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&recordings_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("iq"))
            .collect();
        paths.sort();
        for iq in paths {
            let metadata = iq.with_extension("json");
            recordings.push(RecordingEntry { iq, metadata });
        }
    }

    Ok(DatasetManifest {
        root: root.to_path_buf(),
        global,
        pictures,
        recordings,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub pictures: usize,
    pub annotations: usize,
    pub recordings: usize,
    pub errors: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks that every file in the manifest exists, parses, and is
/// internally consistent. Collects problems instead of stopping at the
/// first one.
pub fn validate_dataset(manifest: &DatasetManifest) -> ValidationReport {
    let mut report = ValidationReport::default();

    for entry in &manifest.pictures {
        report.pictures += 1;
        if !entry.image.is_file() {
            report
                .errors
                .push(format!("missing image {}", entry.image.display()));
        }
        match read_annotations(&entry.annotations) {
            Ok(anns) => report.annotations += anns.len(),
            Err(e) => report.errors.push(e.to_string()),
        }
    }

    for entry in &manifest.recordings {
        report.recordings += 1;
        match read_metadata(&entry.metadata) {
            Ok(meta) => {
                match std::fs::metadata(&entry.iq) {
                    Ok(m) if m.len() == meta.file_size_bytes => {}
                    Ok(m) => report.errors.push(format!(
                        "{}: size {} disagrees with metadata {}",
                        entry.iq.display(),
                        m.len(),
                        meta.file_size_bytes
                    )),
                    Err(e) => report
                        .errors
                        .push(format!("missing I/Q {}: {e}", entry.iq.display())),
                }
                if meta.sample_rate_hz != manifest.global.sample_rate_hz {
                    report.errors.push(format!(
                        "{}: sample rate {} disagrees with global {}",
                        entry.metadata.display(),
                        meta.sample_rate_hz,
                        manifest.global.sample_rate_hz
                    ));
                }
            }
            Err(e) => report.errors.push(e.to_string()),
        }
    }

    report
}

/// Deterministically shuffles `n` items and cuts them into three parts.
///
/// Sizes are `floor(ratio * n)` plus one extra for the largest fractional
/// remainders, so they always sum to `n` and exact ratios are honored
/// exactly.
pub fn split_indices(
    n: usize,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), DatasetError> {
    let (a, b, c) = ratios;
    if !(a >= 0.0 && b >= 0.0 && c >= 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(ratios));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let exact = [a * n as f64, b * n as f64, c * n as f64];
    let mut sizes = [0usize; 3];
    let mut fracs = [0.0f64; 3];
    for i in 0..3 {
        sizes[i] = exact[i].floor() as usize;
        fracs[i] = exact[i] - exact[i].floor();
    }
    let mut remaining = n - sizes.iter().sum::<usize>();
    let mut by_frac = [0, 1, 2];
    by_frac.sort_by(|&x, &y| fracs[y].total_cmp(&fracs[x]).then(x.cmp(&y)));
    for &i in &by_frac {
        if remaining == 0 {
            break;
        }
        sizes[i] += 1;
        remaining -= 1;
    }

    let train = order[..sizes[0]].to_vec();
    let val = order[sizes[0]..sizes[0] + sizes[1]].to_vec();
    let test = order[sizes[0] + sizes[1]..].to_vec();
    Ok((train, val, test))
}

/// Splits a dataset's pictures into train/val/test lists.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<PictureEntry>, Vec<PictureEntry>, Vec<PictureEntry>), DatasetError> {
    let (train, val, test) = split_indices(manifest.pictures.len(), ratios, seed)?;
    let pick = |idx: Vec<usize>| {
        idx.into_iter()
            .map(|i| manifest.pictures[i].clone())
            .collect::<Vec<_>>()
    };
    Ok((pick(train), pick(val), pick(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use tempfile::tempdir;

    #[test]
    fn split_honors_exact_ratios() {
        let (train, val, test) = split_indices(100, (0.64, 0.16, 0.2), 7).unwrap();
        assert_eq!(train.len(), 64);
        assert_eq!(val.len(), 16);
        assert_eq!(test.len(), 20);

        let all: HashSet<usize> = train.iter().chain(&val).chain(&test).copied().collect();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let a = split_indices(50, (0.5, 0.25, 0.25), 1).unwrap();
        let b = split_indices(50, (0.5, 0.25, 0.25), 1).unwrap();
        let c = split_indices(50, (0.5, 0.25, 0.25), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_distributes_remainders_largest_first() {
        // 10 * (0.5, 0.3, 0.2) = (5, 3, 2): exact.
        let (t, v, s) = split_indices(10, (0.5, 0.3, 0.2), 0).unwrap();
        assert_eq!((t.len(), v.len(), s.len()), (5, 3, 2));
        // 7 * (1/3, 1/3, 1/3) = 2.33 each: remainders go to earliest.
        let (t, v, s) = split_indices(7, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), 0).unwrap();
        assert_eq!(t.len() + v.len() + s.len(), 7);
        assert!(t.len() >= v.len() && v.len() >= s.len());
    }

    #[test]
    fn split_rejects_bad_ratios() {
        assert!(matches!(
            split_indices(10, (0.5, 0.2, 0.2), 0),
            Err(DatasetError::BadRatios(_))
        ));
        assert!(matches!(
            split_indices(10, (-0.1, 0.9, 0.2), 0),
            Err(DatasetError::BadRatios(_))
        ));
    }

    #[test]
    fn scenario_validation_catches_nonsense() {
        let mut s = ScenarioConfig::new(0);
        assert!(build_dataset(&s, &PipelineConfig::default(), Path::new("/tmp/x")).is_err());
        s.images = 1;
        s.collision_fraction = 1.5;
        assert!(s.validate().is_err());
        s.collision_fraction = 0.0;
        s.classes.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn tiny_dataset_builds_and_validates() {
        let dir = tempdir().unwrap();
        let pipeline = PipelineConfig {
            fft_size: 64,
            image_rows: 64,
            ..PipelineConfig::default()
        };
        let mut scenario = ScenarioConfig::new(6);
        scenario.seed = 3;
        scenario.sample_rate_hz = 20e6;
        scenario.classes = vec![EmissionClass::Bluetooth, EmissionClass::ZigBee];
        scenario.collision_fraction = 0.5;
        scenario.write_recordings = true;

        let manifest = build_dataset(&scenario, &pipeline, dir.path()).unwrap();
        assert_eq!(manifest.pictures.len(), 6);
        assert_eq!(manifest.recordings.len(), 6);

        // Exactly half the images carry two emissions.
        let mut two = 0;
        for p in &manifest.pictures {
            let anns = read_annotations(&p.annotations).unwrap();
            assert!(!anns.is_empty());
            if anns.len() >= 2 {
                two += 1;
            }
        }
        assert_eq!(two, 3);

        let report = validate_dataset(&manifest);
        assert!(report.is_ok(), "errors: {:?}", report.errors);
        assert_eq!(report.pictures, 6);
        assert_eq!(report.recordings, 6);

        // A rescan sees the same files.
        let rescanned = load_manifest(dir.path()).unwrap();
        assert_eq!(rescanned.pictures.len(), 6);
        assert_eq!(rescanned.recordings.len(), 6);
        assert_eq!(rescanned.global, manifest.global);
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let pipeline = PipelineConfig {
            fft_size: 64,
            image_rows: 64,
            ..PipelineConfig::default()
        };
        let mut scenario = ScenarioConfig::new(2);
        scenario.seed = 11;
        scenario.sample_rate_hz = 20e6;

        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        build_dataset(&scenario, &pipeline, d1.path()).unwrap();
        build_dataset(&scenario, &pipeline, d2.path()).unwrap();
        for name in ["pictures/img_000000.pgm", "pictures/img_000001.txt"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical builds");
        }
    }

    #[test]
    fn collision_images_have_overlapping_boxes() {
        let dir = tempdir().unwrap();
        let pipeline = PipelineConfig {
            fft_size: 64,
            image_rows: 64,
            ..PipelineConfig::default()
        };
        let mut scenario = ScenarioConfig::new(4);
        scenario.seed = 5;
        scenario.sample_rate_hz = 20e6;
        scenario.collision_fraction = 1.0;

        let manifest = build_dataset(&scenario, &pipeline, dir.path()).unwrap();
        for p in &manifest.pictures {
            let anns = read_annotations(&p.annotations).unwrap();
            assert_eq!(anns.len(), 2);
            assert!(anns[0].bbox.overlaps(&anns[1].bbox));
        }
    }
}
