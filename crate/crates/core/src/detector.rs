//! Detection primitives and a classical baseline detector.
//!
//! The learned-model side of the toolkit works on prediction tensors and
//! anchor boxes; this module provides the surrounding machinery (IoU,
//! NMS, tensor decoding, anchor clustering, the filter-volume schedule)
//! plus a no-training baseline built on thresholding and connected
//! components. The baseline doubles as a reference implementation for
//! scoring and as a sanity check for rendered datasets.

use crate::dataset::BoundingBox;
use crate::emission::EmissionClass;
use crate::spectral::{FrameGeometry, GrayImage, MappingConfig, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("need at least {need} boxes for {need} clusters, got {have}")]
    TooFewBoxes { have: usize, need: usize },
    #[error("box extents must be positive and finite, got ({0}, {1})")]
    InvalidBox(f64, f64),
    #[error("tensor length {got} does not match layout ({expected})")]
    LengthMismatch { expected: usize, got: usize },
    #[error("sigma must lie in (0, 1), got {0}")]
    InvalidSigma(f64),
    #[error("{path}:{line}: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One detected emission.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class: EmissionClass,
    pub bbox: BoundingBox,
    /// Objectness in [0, 1].
    pub confidence: f64,
    /// Per-class probabilities in class-id order, summing to 1.
    pub class_probs: Vec<f64>,
}

impl Detection {
    pub fn new(class: EmissionClass, bbox: BoundingBox, confidence: f64) -> Self {
        let mut class_probs = vec![0.0; EmissionClass::COUNT];
        class_probs[class.class_id() as usize] = 1.0;
        Self {
            class,
            bbox,
            confidence,
            class_probs,
        }
    }
}

/// Intersection over union of two boxes. Degenerate boxes score 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// IoU of two box *shapes*, both anchored at a common center.
pub fn shape_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.0.min(b.0) * a.1.min(b.1);
    let union = a.0 * a.1 + b.0 * b.1 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy non-maximum suppression.
///
/// Detections are visited in descending confidence; one is dropped when an
/// already kept detection of the same class overlaps it with IoU above
/// the threshold. Different classes never suppress each other. The result
/// is sorted by descending confidence, which makes the pass idempotent.
pub fn nms(mut detections: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    detections.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<Detection> = Vec::with_capacity(detections.len());
    for det in detections {
        let suppressed = kept
            .iter()
            .any(|k| k.class == det.class && iou(&k.bbox, &det.bbox) > iou_threshold);
        if !suppressed {
            kept.push(det);
        }
    }
    kept
}

/// Anchor shapes (width, height) in normalized coordinates, sorted by
/// area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub anchors: Vec<(f64, f64)>,
}

impl AnchorSet {
    pub fn save(&self, path: &Path) -> Result<(), DetectorError> {
        std::fs::write(path, serde_json::to_string_pretty(&self.anchors)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DetectorError> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self {
            anchors: serde_json::from_str(&text)?,
        })
    }
}

fn anchor_distance(b: (f64, f64), c: (f64, f64)) -> f64 {
    1.0 - shape_iou(b, c)
}

fn cluster_means(boxes: &[(f64, f64)], assign: &[usize], k: usize) -> Vec<(f64, f64)> {
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
    for (b, &a) in boxes.iter().zip(assign) {
        sums[a].0 += b.0;
        sums[a].1 += b.1;
        sums[a].2 += 1;
    }
    sums.iter()
        .map(|&(w, h, n)| {
            if n == 0 {
                (0.0, 0.0)
            } else {
                (w / n as f64, h / n as f64)
            }
        })
        .collect()
}

fn partition_cost(boxes: &[(f64, f64)], assign: &[usize], k: usize) -> f64 {
    let means = cluster_means(boxes, assign, k);
    boxes
        .iter()
        .zip(assign)
        .map(|(b, &a)| anchor_distance(*b, means[a]))
        .sum()
}

fn lloyd_once(boxes: &[(f64, f64)], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = boxes.len();

    // k-means++ seeding on the IoU distance.
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(k);
    centers.push(boxes[rng.random_range(0..n)]);
    while centers.len() < k {
        let weights: Vec<f64> = boxes
            .iter()
            .map(|b| {
                centers
                    .iter()
                    .map(|c| anchor_distance(*b, *c))
                    .fold(f64::INFINITY, f64::min)
                    .powi(2)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total <= 0.0 {
            // All boxes coincide with a center; any pick works.
            rng.random_range(0..n)
        } else {
            let mut t = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if t < *w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        };
        centers.push(boxes[next]);
    }

    let mut assign = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, b) in boxes.iter().enumerate() {
            let best = (0..k)
                .min_by(|&x, &y| {
                    anchor_distance(*b, centers[x]).total_cmp(&anchor_distance(*b, centers[y]))
                })
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        // Re-seed empty clusters with the worst-fitting box.
        let mut counts = vec![0usize; k];
        for &a in &assign {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let worst = (0..n)
                    .max_by(|&x, &y| {
                        anchor_distance(boxes[x], centers[assign[x]])
                            .total_cmp(&anchor_distance(boxes[y], centers[assign[y]]))
                    })
                    .unwrap();
                counts[assign[worst]] -= 1;
                assign[worst] = c;
                counts[c] = 1;
                changed = true;
            }
        }
        centers = cluster_means(boxes, &assign, k);
        if !changed {
            break;
        }
    }
    assign
}

/// Single-point relocation polish: move one box to another cluster when
/// that lowers the partition cost, until no move helps. Quadratic, so it
/// only runs on small instances where it is essentially free.
fn polish_assignments(boxes: &[(f64, f64)], assign: &mut Vec<usize>, k: usize) {
    if boxes.len() * k > 4096 {
        return;
    }
    let mut cost = partition_cost(boxes, assign, k);
    for _ in 0..50 {
        let mut improved = false;
        for i in 0..boxes.len() {
            let original = assign[i];
            // Moves that would empty a cluster are not partitions into k.
            if assign.iter().filter(|&&a| a == original).count() == 1 {
                continue;
            }
            for target in 0..k {
                if target == original {
                    continue;
                }
                assign[i] = target;
                let candidate = partition_cost(boxes, assign, k);
                if candidate + 1e-12 < cost {
                    cost = candidate;
                    improved = true;
                    break;
                }
                assign[i] = original;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Clusters box shapes into `k` anchors with k-means under the
/// `1 - shape_iou` distance, taking the best of several seeded restarts.
/// Deterministic in `seed`.
pub fn kmeans_anchors(
    boxes: &[(f64, f64)],
    k: usize,
    seed: u64,
) -> Result<AnchorSet, DetectorError> {
    if k == 0 || boxes.len() < k {
        return Err(DetectorError::TooFewBoxes {
            have: boxes.len(),
            need: k.max(1),
        });
    }
    for &(w, h) in boxes {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(DetectorError::InvalidBox(w, h));
        }
    }

    // Tiny inputs are solved exactly by enumerating every partition;
    // Lloyd iterations can stall in local optima that matter at this size.
    let mut anchors = if (boxes.len() as f64) * (k as f64).log2() <= 17.0 {
        exhaustive_anchors(boxes, k)
    } else {
        let restarts = if boxes.len() <= 16 { 32 } else { 10 };
        let mut best: Option<(f64, Vec<usize>)> = None;
        for r in 0..restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let mut assign = lloyd_once(boxes, k, &mut rng);
            polish_assignments(boxes, &mut assign, k);
            let cost = partition_cost(boxes, &assign, k);
            if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                best = Some((cost, assign));
            }
        }
        let (_, assign) = best.expect("at least one restart ran");
        cluster_means(boxes, &assign, k)
    };
    anchors.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)));
    Ok(AnchorSet { anchors })
}

/// Exact anchors for small inputs: the mean-derived anchor set, over all
/// `k^n` assignments, that scores best when every box is charged to its
/// nearest anchor (how an anchor set is actually used; a box near a
/// cluster boundary may sit closer to a neighboring cluster's mean).
fn exhaustive_anchors(boxes: &[(f64, f64)], k: usize) -> Vec<(f64, f64)> {
    let n = boxes.len();
    let mut assign = vec![0usize; n];
    let mut best_cost = f64::INFINITY;
    let mut best_means = cluster_means(boxes, &assign, k);
    loop {
        let means = cluster_means(boxes, &assign, k);
        let cost: f64 = boxes
            .iter()
            .map(|&b| {
                means
                    .iter()
                    .map(|&m| anchor_distance(b, m))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        if cost < best_cost {
            best_cost = cost;
            best_means = means;
        }
        let mut i = 0;
        while i < n {
            assign[i] += 1;
            if assign[i] < k {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    best_means
}

/// Shape of a flat prediction tensor.
///
/// Layout, outermost to innermost: scale (in `grid_sizes` order), grid
/// cell in row-major order, box slot within the cell, then
/// `[confidence, x, y, w, h, class scores...]`. The in-cell `x`/`y` are
/// fractions of one cell; `w`/`h` are image-relative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorLayout {
    pub grid_sizes: Vec<usize>,
    pub boxes_per_cell: usize,
    pub num_classes: usize,
}

impl TensorLayout {
    pub fn slots_per_box(&self) -> usize {
        5 + self.num_classes
    }

    pub fn len(&self) -> usize {
        self.grid_sizes
            .iter()
            .map(|s| s * s * self.boxes_per_cell * self.slots_per_box())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const DEFAULT_CONFIDENCE_CUTOFF: f64 = 0.25;

/// Decodes a flat prediction tensor into detections.
///
/// Boxes with confidence below `confidence_cutoff` are skipped. Class
/// scores are normalized into probabilities; a box with all-zero scores
/// gets a uniform distribution.
pub fn decode_tensor(
    raw: &[f64],
    layout: &TensorLayout,
    confidence_cutoff: f64,
) -> Result<Vec<Detection>, DetectorError> {
    if raw.len() != layout.len() {
        return Err(DetectorError::LengthMismatch {
            expected: layout.len(),
            got: raw.len(),
        });
    }

    let slots = layout.slots_per_box();
    let mut out = Vec::new();
    let mut offset = 0;
    for &grid in &layout.grid_sizes {
        for cy in 0..grid {
            for cx in 0..grid {
                for _ in 0..layout.boxes_per_cell {
                    let v = &raw[offset..offset + slots];
                    offset += slots;
                    let confidence = v[0];
                    if confidence < confidence_cutoff {
                        continue;
                    }
                    let bbox = BoundingBox::new(
                        (cx as f64 + v[1]) / grid as f64,
                        (cy as f64 + v[2]) / grid as f64,
                        v[3],
                        v[4],
                    );
                    let scores = &v[5..];
                    let sum: f64 = scores.iter().sum();
                    let class_probs: Vec<f64> = if sum > 0.0 {
                        scores.iter().map(|s| s / sum).collect()
                    } else {
                        vec![1.0 / layout.num_classes as f64; layout.num_classes]
                    };
                    let class_idx = class_probs
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    let class = EmissionClass::from_class_id(class_idx as u8)
                        .unwrap_or(EmissionClass::WiFi);
                    out.push(Detection {
                        class,
                        bbox,
                        confidence,
                        class_probs,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Convolution filter-volume reduction schedule: each stage `i` keeps a
/// `1 - sigma^i` fraction of the previous stage's filters (rounded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSchedule {
    pub base_volume: u64,
    pub sigma: f64,
    pub stop_stage: usize,
    /// `volumes[0]` is the base; `volumes[i]` the volume after stage `i`.
    pub volumes: Vec<u64>,
}

impl FilterSchedule {
    /// Total fractional reduction from base to final volume.
    pub fn total_reduction(&self) -> f64 {
        let last = *self.volumes.last().expect("never empty");
        1.0 - last as f64 / self.base_volume as f64
    }
}

pub fn filter_schedule(
    base_volume: u64,
    sigma: f64,
    stop_stage: usize,
) -> Result<FilterSchedule, DetectorError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(DetectorError::InvalidSigma(sigma));
    }
    let mut volumes = vec![base_volume];
    for i in 1..=stop_stage {
        let prev = *volumes.last().unwrap() as f64;
        volumes.push((prev * (1.0 - sigma.powi(i as i32))).round() as u64);
    }
    Ok(FilterSchedule {
        base_volume,
        sigma,
        stop_stage,
        volumes,
    })
}

/// Classical detector: threshold over the noise floor, 8-connected
/// components, per-axis energy trim, bandwidth-based classification.
///
/// On RGB frames it reads the blue (average energy) channel. All defaults
/// are calibrated for the standard mapping window.
#[derive(Debug, Clone)]
pub struct BaselineDetector {
    pub mapping: MappingConfig,
    /// Pixels count as active above this many dB over the noise floor.
    pub threshold_db: f64,
    /// Components smaller than this many active pixels are noise specks.
    pub min_area_px: usize,
    /// Rows/columns whose energy profile falls this far below the peak
    /// are trimmed off the box (kills window-leakage skirts).
    pub trim_db: f64,
    pub nms_iou: f64,
}

impl Default for BaselineDetector {
    fn default() -> Self {
        Self {
            mapping: MappingConfig::default(),
            threshold_db: 12.0,
            min_area_px: 12,
            trim_db: 12.0,
            nms_iou: 0.5,
        }
    }
}

struct Component {
    pixels: Vec<(usize, usize)>, // (x, y)
}

fn connected_components(mask: &[bool], width: usize, height: usize) -> Vec<Component> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            pixels.push((x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(Component { pixels });
    }
    out
}

impl BaselineDetector {
    pub fn detect_gray(&self, img: &GrayImage, geom: &FrameGeometry) -> Vec<Detection> {
        let (w, h) = (img.width, img.height);
        if w == 0 || h == 0 {
            return Vec::new();
        }
        // Threshold in un-rounded pixel units.
        let tau = self.mapping.gamma() * (self.threshold_db - self.mapping.a_min_db);
        let mut mask: Vec<bool> = img.pixels.iter().map(|&p| p as f64 > tau).collect();

        let mut detections = Vec::new();

        // Carrier lines first: a persistent near-single-bin emission fuses
        // with anything crossing its band into one blob, so lines are
        // detected on column coverage and lifted out of the mask before
        // labeling.
        let mut blanked = vec![false; w];
        for (lx0, lx1) in line_column_runs(&mask, w, h) {
            // A rejected candidate (too wide once the sub-threshold skirt
            // is measured) stays in the mask for the component pass.
            let Some(d) = self.line_to_detection(lx0, lx1, img, geom) else {
                continue;
            };
            detections.push(d);
            // The margin takes the line's sidelobe skirt with it; the
            // profile bridge below heals any crossing burst.
            for x in lx0.saturating_sub(2)..=(lx1 + 2).min(w - 1) {
                blanked[x] = true;
                for y in 0..h {
                    mask[y * w + x] = false;
                }
            }
        }

        // Label with the blanked columns removed from the grid, so the two
        // halves of a burst a line cut through stay one component.
        let keep: Vec<usize> = (0..w).filter(|&x| !blanked[x]).collect();
        let comps = if keep.len() == w {
            connected_components(&mask, w, h)
        } else {
            let kw = keep.len();
            let mut compact = vec![false; kw * h];
            for y in 0..h {
                for (cx, &ox) in keep.iter().enumerate() {
                    compact[y * kw + cx] = mask[y * w + ox];
                }
            }
            connected_components(&compact, kw, h)
                .into_iter()
                .map(|c| Component {
                    pixels: c.pixels.into_iter().map(|(cx, y)| (keep[cx], y)).collect(),
                })
                .collect()
        };

        for comp in comps {
            if comp.pixels.len() < self.min_area_px {
                continue;
            }
            if let Some(d) = self.component_to_detection(&comp, img, geom, &blanked) {
                detections.push(d);
            }
            self.push_nested(&comp, img, geom, &blanked, &mut detections);
        }
        nms(detections, self.nms_iou)
    }

    /// Second look inside a wide component. A narrow burst overlapping a
    /// much wider one in both time and band merges into the wide blob, but
    /// it still raises the blob's column profile over its own band by its
    /// share of the summed energy -- a step far above the profile's
    /// averaging ripple -- and within those columns it raises the row
    /// profile over its own duration. Both extents are recoverable even
    /// when the guest is too dim for any per-pixel threshold.
    fn push_nested(
        &self,
        comp: &Component,
        img: &GrayImage,
        geom: &FrameGeometry,
        blanked: &[bool],
        out: &mut Vec<Detection>,
    ) {
        let (w, h) = (img.width, img.height);
        let Some(x0) = comp.pixels.iter().map(|p| p.0).min() else {
            return;
        };
        let x1 = comp.pixels.iter().map(|p| p.0).max().unwrap_or(x0);
        let y0 = comp.pixels.iter().map(|p| p.1).min().unwrap_or(0);
        let y1 = comp.pixels.iter().map(|p| p.1).max().unwrap_or(0);
        let width_px = x1 - x0 + 1;
        let rows = (y1 - y0 + 1) as f64;
        if width_px < 24 {
            // Only the wide flat-spectrum classes plausibly host a guest;
            // narrow hosts also have shaped spectra that would read as
            // bumps of their own.
            return;
        }

        // Mean column energies over the component's rectangle.
        let mean_col: Vec<f64> = (x0..=x1)
            .map(|x| {
                (y0..=y1)
                    .map(|y| self.mapping.pixel_to_energy(img.get(x, y)))
                    .sum::<f64>()
                    / rows
            })
            .collect();
        let mut sorted = mean_col.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let plateau = sorted[sorted.len() / 2];
        if plateau <= 0.0 {
            return;
        }
        // Candidate guest bands: contiguous columns at least 1 dB over the
        // host plateau. The profile averages hundreds of rows, so its
        // ripple is a small fraction of a dB and the step is unmistakable.
        let step = plateau * 10f64.powf(0.10);
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut i = 0;
        while i < mean_col.len() {
            if mean_col[i] > step {
                let start = i;
                while i + 1 < mean_col.len() && mean_col[i + 1] > step {
                    i += 1;
                }
                runs.push((start, i));
            }
            i += 1;
        }

        let mut emitted = 0;
        for &(r0, r1) in &runs {
            if emitted >= 2 {
                // Images carry at most a couple of overlapping emissions;
                // more bumps than that means the plateau estimate is off.
                return;
            }
            if (r0..=r1).any(|i| blanked.get(x0 + i).copied().unwrap_or(false)) {
                // A carrier line already claimed these columns.
                continue;
            }
            // Refine the band to the -10 dB width of the excess over the
            // plateau; a fixed threshold erodes shaped spectra so unevenly
            // that class widths come out wrong.
            let peak_i = (r0..=r1)
                .max_by(|&a, &b| mean_col[a].total_cmp(&mean_col[b]))
                .unwrap_or(r0);
            let peak_ex = mean_col[peak_i] - plateau;
            let keep = |i: usize| mean_col[i] - plateau >= peak_ex * 0.1;
            let mut b0 = peak_i;
            while b0 > 0 && keep(b0 - 1) {
                b0 -= 1;
            }
            let mut b1 = peak_i;
            while b1 + 1 < mean_col.len() && keep(b1 + 1) {
                b1 += 1;
            }
            let guest_w = b1 - b0 + 1;
            if guest_w * 2 > width_px {
                // Not meaningfully narrower than the host: a brighter
                // overlapping band, not a guest.
                continue;
            }
            if guest_w > 16 && (b0 == 0 || b1 + 1 == mean_col.len()) {
                // A wide guest is only credible when its band lies strictly
                // inside the host's; running off the component's edge means
                // it is the visible half of a partial band overlap.
                continue;
            }

            // The guest's rows: where its columns run hotter than the rest
            // of the host's band at that row. Tolerating small gaps keeps
            // one noisy row from splitting the burst.
            let base_cols: Vec<usize> = (0..mean_col.len())
                .filter(|&i| runs.iter().all(|&(a, b)| i < a || i > b))
                .collect();
            if base_cols.is_empty() {
                return;
            }
            let mut qual = vec![false; y1 - y0 + 1];
            for y in y0..=y1 {
                let guest: f64 = (b0..=b1)
                    .map(|i| self.mapping.pixel_to_energy(img.get(x0 + i, y)))
                    .sum::<f64>()
                    / guest_w as f64;
                let base: f64 = base_cols
                    .iter()
                    .map(|&i| self.mapping.pixel_to_energy(img.get(x0 + i, y)))
                    .sum::<f64>()
                    / base_cols.len() as f64;
                qual[y - y0] = guest > base * 10f64.powf(0.15);
            }
            let Some((gy0, gy1)) = longest_run_with_gaps(&qual, 2) else {
                continue;
            };
            if gy1 - gy0 + 1 < 12 {
                continue;
            }
            let (ty0, ty1) = (y0 + gy0, y0 + gy1);

            let width_hz = guest_w as f64 * geom.hz_per_column();
            let coverage = (ty1 - ty0 + 1) as f64 / h as f64;
            let class = classify_component(width_hz, guest_w, coverage);
            let bbox = if class == EmissionClass::Xpd {
                // Sub-bin recovery as in the component path, with the host
                // plateau subtracted so only the carrier's energy weighs in.
                let total: f64 = (b0..=b1).map(|i| (mean_col[i] - plateau).sqrt()).sum();
                let centroid = (b0..=b1)
                    .map(|i| (x0 + i) as f64 * (mean_col[i] - plateau).sqrt())
                    .sum::<f64>()
                    / total;
                let snap_w = EmissionClass::Xpd.nominal_bandwidth_hz()
                    / (geom.hz_per_column() * w as f64);
                BoundingBox::new(
                    centroid / w as f64,
                    (ty0 as f64 + (ty1 - ty0 + 1) as f64 / 2.0) / h as f64,
                    snap_w,
                    (ty1 - ty0 + 1) as f64 / h as f64,
                )
            } else {
                match BoundingBox::from_edges(
                    (x0 + b0) as f64 / w as f64,
                    ty0 as f64 / h as f64,
                    (x0 + b1 + 1) as f64 / w as f64,
                    (ty1 + 1) as f64 / h as f64,
                ) {
                    Some(b) => b,
                    None => continue,
                }
            };

            let mut sum = 0.0;
            let mut count = 0usize;
            for y in ty0..=ty1 {
                for i in b0..=b1 {
                    sum += img.get(x0 + i, y) as f64 / 255.0;
                    count += 1;
                }
            }
            if count == 0 {
                continue;
            }
            let confidence = (sum / count as f64).clamp(0.0, 1.0);
            let Some(bbox) = bbox.clip_unit() else {
                continue;
            };
            out.push(Detection::new(class, bbox, confidence));
            emitted += 1;
        }
    }

    pub fn detect_rgb(&self, img: &RgbImage, geom: &FrameGeometry) -> Vec<Detection> {
        self.detect_gray(&img.channel(2), geom)
    }

    /// Turns a persistent narrow column run into a carrier-line detection.
    /// Column amplitudes come from each column's lower-quartile pixel: a
    /// burst crossing the line inflates only its own rows, while the line
    /// is present in nearly all of them, so a low quantile isolates it.
    fn line_to_detection(
        &self,
        lx0: usize,
        lx1: usize,
        img: &GrayImage,
        geom: &FrameGeometry,
    ) -> Option<Detection> {
        let (w, h) = (img.width, img.height);
        let energies: Vec<f64> = (lx0..=lx1)
            .map(|x| {
                let mut col: Vec<u8> = (0..h).map(|y| img.get(x, y)).collect();
                col.sort_unstable();
                // Lower-quartile pixel: a burst crossing the line inflates
                // only its own rows, the line is present in nearly all of
                // them, so a low quantile isolates the line.
                self.mapping.pixel_to_energy(col[h / 4])
            })
            .collect();
        // A carrier concentrates in the two columns its frequency splits
        // between, with leakage well below them. Three or more comparable
        // columns mean a persistent narrow band, not a carrier.
        let mut sorted = energies.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        sorted.reverse();
        if sorted.len() >= 3 && sorted[2] > 0.3 * sorted[0] {
            return None;
        }

        let mut weight = 0.0f64;
        let mut moment = 0.0f64;
        let mut brightness = 0.0f64;
        for x in lx0..=lx1 {
            let amp = energies[x - lx0].sqrt();
            weight += amp;
            moment += x as f64 * amp;
            brightness += (0..h).map(|y| img.get(x, y) as f64 / 255.0).sum::<f64>() / h as f64;
        }
        if weight <= 0.0 {
            return None;
        }
        // Same sub-bin recovery as the component path: amplitude-weighted
        // centroid over bin frequencies (column left edges).
        let x_center = moment / weight / w as f64;
        let snap_w =
            EmissionClass::Xpd.nominal_bandwidth_hz() / (geom.hz_per_column() * w as f64);
        let confidence = (brightness / (lx1 - lx0 + 1) as f64).clamp(0.0, 1.0);
        let bbox = BoundingBox::new(x_center, 0.5, snap_w, 1.0);
        Some(Detection::new(
            EmissionClass::Xpd,
            bbox.clip_unit()?,
            confidence,
        ))
    }

    fn component_to_detection(
        &self,
        comp: &Component,
        img: &GrayImage,
        geom: &FrameGeometry,
        blanked: &[bool],
    ) -> Option<Detection> {
        let (w, h) = (img.width, img.height);
        let x0 = comp.pixels.iter().map(|p| p.0).min()?;
        let x1 = comp.pixels.iter().map(|p| p.0).max()?;
        let y0 = comp.pixels.iter().map(|p| p.1).min()?;
        let y1 = comp.pixels.iter().map(|p| p.1).max()?;

        // Energy profiles over the component's pixels only: other
        // components sharing the rect must not widen this one.
        let mut col_energy = vec![0.0f64; x1 - x0 + 1];
        let mut row_energy = vec![0.0f64; y1 - y0 + 1];
        for &(x, y) in &comp.pixels {
            let e = self.mapping.pixel_to_energy(img.get(x, y));
            col_energy[x - x0] += e;
            row_energy[y - y0] += e;
        }
        // Columns the line pass blanked hold no pixels here; bridge their
        // profile entries so the trim crosses the cut instead of stopping
        // at an artificial notch.
        for i in 0..col_energy.len() {
            if blanked.get(x0 + i).copied().unwrap_or(false) {
                let left = (0..i).rev().find(|&j| !blanked[x0 + j]).map(|j| col_energy[j]);
                let right = (i + 1..col_energy.len())
                    .find(|&j| !blanked[x0 + j])
                    .map(|j| col_energy[j]);
                col_energy[i] = match (left, right) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => 0.0,
                };
            }
        }
        let (cx0, cx1) = trim_profile(&col_energy, self.trim_db);
        let (ry0, ry1) = trim_profile(&row_energy, self.trim_db);
        let (tx0, tx1) = (x0 + cx0, x0 + cx1);
        let (ty0, ty1) = (y0 + ry0, y0 + ry1);

        let width_px = tx1 - tx0 + 1;
        let height_px = ty1 - ty0 + 1;
        let width_hz = width_px as f64 * geom.hz_per_column();

        // Continuity: how much of the whole frame the component spans.
        let frame_coverage = height_px as f64 / h as f64;

        let class = classify_component(width_hz, width_px, frame_coverage);

        // Confidence: mean active-pixel brightness inside the trimmed box.
        let mut sum = 0.0;
        let mut count = 0usize;
        for &(x, y) in &comp.pixels {
            if x >= tx0 && x <= tx1 && y >= ty0 && y <= ty1 {
                sum += img.get(x, y) as f64 / 255.0;
                count += 1;
            }
        }
        if count == 0 {
            return None;
        }
        let confidence = (sum / count as f64).clamp(0.0, 1.0);

        let bbox = if class == EmissionClass::Xpd {
            // A sub-bin carrier splits between two columns. With a
            // rectangular analysis window the Dirichlet kernel gives
            // amplitude ratios delta : (1 - delta) for a carrier at
            // fractional bin offset delta, so the amplitude-weighted
            // centroid over bin frequencies (column left edges, where
            // bin k resonates at k/w) recovers the true center almost
            // exactly. The box then snaps to the class bandwidth.
            let total: f64 = col_energy.iter().map(|e| e.sqrt()).sum();
            let centroid_px = col_energy
                .iter()
                .enumerate()
                .map(|(i, e)| (x0 + i) as f64 * e.sqrt())
                .sum::<f64>()
                / total;
            let x_center = centroid_px / w as f64;
            let snap_w = EmissionClass::Xpd.nominal_bandwidth_hz()
                / (geom.hz_per_column() * w as f64);
            BoundingBox::new(
                x_center,
                (ty0 as f64 + height_px as f64 / 2.0) / h as f64,
                snap_w,
                height_px as f64 / h as f64,
            )
        } else {
            BoundingBox::from_edges(
                tx0 as f64 / w as f64,
                ty0 as f64 / h as f64,
                (tx1 + 1) as f64 / w as f64,
                (ty1 + 1) as f64 / h as f64,
            )?
        };

        Some(Detection::new(class, bbox.clip_unit()?, confidence))
    }
}

/// Inclusive column runs whose per-column active coverage marks a
/// persistent narrow line. Runs wider than the carrier-line width are
/// continuous band emissions and are left to the component pass.
fn line_column_runs(mask: &[bool], w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut covered = vec![0usize; w];
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] {
                covered[x] += 1;
            }
        }
    }
    let need = (h as f64 * 0.9).ceil() as usize;
    let mut runs = Vec::new();
    let mut x = 0;
    while x < w {
        if covered[x] >= need {
            let start = x;
            while x + 1 < w && covered[x + 1] >= need {
                x += 1;
            }
            if x - start + 1 <= 4 {
                runs.push((start, x));
            }
        }
        x += 1;
    }
    runs
}

/// Longest run of set flags, tolerating up to `max_gap` consecutive clear
/// ones inside it; the returned inclusive bounds land on set flags.
fn longest_run_with_gaps(flags: &[bool], max_gap: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start: Option<usize> = None;
    let mut last_set = 0usize;
    let better = |cand: (usize, usize), best: &mut Option<(usize, usize)>| {
        if best.map_or(true, |(a, b)| cand.1 - cand.0 > b - a) {
            *best = Some(cand);
        }
    };
    for (i, &f) in flags.iter().enumerate() {
        if !f {
            continue;
        }
        match start {
            Some(s) if i - last_set > max_gap + 1 => {
                better((s, last_set), &mut best);
                start = Some(i);
            }
            Some(_) => {}
            None => start = Some(i),
        }
        last_set = i;
    }
    if let Some(s) = start {
        better((s, last_set), &mut best);
    }
    best
}

/// Keeps the contiguous profile range around the peak whose entries stay
/// within `trim_db` of it; returns inclusive index bounds.
fn trim_profile(profile: &[f64], trim_db: f64) -> (usize, usize) {
    let peak_idx = profile
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let cutoff = profile[peak_idx] * 10f64.powf(-trim_db / 10.0);
    let mut lo = peak_idx;
    while lo > 0 && profile[lo - 1] >= cutoff {
        lo -= 1;
    }
    let mut hi = peak_idx;
    while hi + 1 < profile.len() && profile[hi + 1] >= cutoff {
        hi += 1;
    }
    (lo, hi)
}

fn classify_component(width_hz: f64, width_px: usize, frame_coverage: f64) -> EmissionClass {
    // A persistent near-single-bin line is the FM video transmitter. Its
    // carrier smears over up to ~4 columns (window leakage depends on how
    // the carrier sits against the bin grid); genuinely wider persistent
    // bands fall through to bandwidth matching.
    if width_px <= 4 && frame_coverage >= 0.9 {
        return EmissionClass::Xpd;
    }
    let nearest = EmissionClass::ALL
        .iter()
        .copied()
        .min_by(|a, b| {
            let da = (width_hz.ln() - a.nominal_bandwidth_hz().ln()).abs();
            let db = (width_hz.ln() - b.nominal_bandwidth_hz().ln()).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    if nearest == EmissionClass::Xpd && frame_coverage < 0.9 {
        // Narrow but bursty: the narrowest bursty class fits better.
        return EmissionClass::Bluetooth;
    }
    nearest
}

/// Detections-file line format: the annotation format plus a trailing
/// confidence column.
pub fn format_detections(detections: &[Detection]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for d in detections {
        writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
            d.class.class_id(),
            d.bbox.x_center,
            d.bbox.y_center,
            d.bbox.width,
            d.bbox.height,
            d.confidence
        )
        .expect("string write cannot fail");
    }
    out
}

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<(), DetectorError> {
    std::fs::write(path, format_detections(detections))?;
    Ok(())
}

pub fn parse_detections(text: &str, origin: &str) -> Result<Vec<Detection>, DetectorError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| DetectorError::MalformedLine {
            path: origin.to_string(),
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        }
        let id: u8 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad class id '{}'", fields[0])))?;
        let class = EmissionClass::from_class_id(id)
            .ok_or_else(|| err(format!("class id {id} out of range")))?;
        let mut nums = [0.0f64; 5];
        for (i, f) in fields[1..].iter().enumerate() {
            nums[i] = f
                .parse()
                .map_err(|_| err(format!("bad number '{f}'")))?;
        }
        out.push(Detection::new(
            class,
            BoundingBox::new(nums[0], nums[1], nums[2], nums[3]),
            nums[4],
        ));
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>, DetectorError> {
    let text = std::fs::read_to_string(path)?;
    parse_detections(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    #[test]
    fn iou_of_identical_boxes_is_one() {
        let a = b(0.5, 0.5, 0.2, 0.4);
        assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_of_disjoint_boxes_is_zero() {
        assert_eq!(iou(&b(0.2, 0.2, 0.1, 0.1), &b(0.8, 0.8, 0.1, 0.1)), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        // Two unit-fraction squares offset by half their width:
        // intersection 0.5a, union 1.5a, IoU = 1/3.
        let a = b(0.4, 0.5, 0.2, 0.2);
        let c = b(0.5, 0.5, 0.2, 0.2);
        assert!((iou(&a, &c) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn shape_iou_ignores_position() {
        assert!((shape_iou((0.2, 0.2), (0.2, 0.2)) - 1.0).abs() < 1e-12);
        // (0.1 x 0.2) vs (0.2 x 0.1): inter 0.01, union 0.03.
        assert!((shape_iou((0.1, 0.2), (0.2, 0.1)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nms_keeps_highest_confidence_per_cluster() {
        let dets = vec![
            Detection::new(EmissionClass::WiFi, b(0.5, 0.5, 0.2, 0.2), 0.7),
            Detection::new(EmissionClass::WiFi, b(0.51, 0.5, 0.2, 0.2), 0.9),
            Detection::new(EmissionClass::WiFi, b(0.52, 0.5, 0.2, 0.2), 0.6),
        ];
        let kept = nms(dets, 0.5);
        assert_eq!(kept.len(), 1);
        assert!((kept[0].confidence - 0.9).abs() < 1e-12);
    }

    #[test]
    fn nms_never_suppresses_across_classes() {
        let dets = vec![
            Detection::new(EmissionClass::WiFi, b(0.5, 0.5, 0.2, 0.2), 0.9),
            Detection::new(EmissionClass::ZigBee, b(0.5, 0.5, 0.2, 0.2), 0.3),
        ];
        let kept = nms(dets, 0.5);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn nms_is_idempotent_and_sorted() {
        let dets = vec![
            Detection::new(EmissionClass::WiFi, b(0.2, 0.2, 0.1, 0.1), 0.4),
            Detection::new(EmissionClass::WiFi, b(0.8, 0.8, 0.1, 0.1), 0.8),
            Detection::new(EmissionClass::Bluetooth, b(0.5, 0.5, 0.1, 0.1), 0.6),
        ];
        let once = nms(dets, 0.5);
        let twice = nms(once.clone(), 0.5);
        assert_eq!(once, twice);
        assert!(once.windows(2).all(|w| w[0].confidence >= w[1].confidence));
    }

    #[test]
    fn filter_schedule_matches_worked_example() {
        let s = filter_schedule(256, 0.5, 2).unwrap();
        assert_eq!(s.volumes, vec![256, 128, 96]);
        assert!((s.total_reduction() - 0.625).abs() < 1e-12);
    }

    #[test]
    fn filter_schedule_volumes_never_increase() {
        for (base, sigma, stop) in [(256u64, 0.5, 6), (100, 0.9, 8), (37, 0.01, 5)] {
            let s = filter_schedule(base, sigma, stop).unwrap();
            assert!(s.volumes.windows(2).all(|w| w[1] <= w[0]), "{s:?}");
        }
    }

    #[test]
    fn filter_schedule_rejects_bad_sigma() {
        assert!(matches!(
            filter_schedule(256, 0.0, 2),
            Err(DetectorError::InvalidSigma(_))
        ));
        assert!(matches!(
            filter_schedule(256, 1.0, 2),
            Err(DetectorError::InvalidSigma(_))
        ));
    }

    #[test]
    fn kmeans_recovers_well_separated_shape_groups() {
        let mut boxes = Vec::new();
        for i in 0..20 {
            let eps = (i % 5) as f64 * 1e-4;
            boxes.push((0.05 + eps, 0.9 - eps)); // tall narrow
            boxes.push((0.4 + eps, 0.4 - eps)); // large square
        }
        let anchors = kmeans_anchors(&boxes, 2, 1).unwrap().anchors;
        assert_eq!(anchors.len(), 2);
        assert!((anchors[0].0 - 0.0502).abs() < 1e-3, "{anchors:?}");
        assert!((anchors[1].0 - 0.4002).abs() < 1e-3, "{anchors:?}");
    }

    #[test]
    fn kmeans_is_deterministic_in_seed() {
        let boxes: Vec<(f64, f64)> = (0..30)
            .map(|i| (0.01 + 0.003 * (i % 7) as f64, 0.02 + 0.005 * (i % 5) as f64))
            .collect();
        let a = kmeans_anchors(&boxes, 3, 9).unwrap();
        let b = kmeans_anchors(&boxes, 3, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_rejects_undersized_input() {
        assert!(matches!(
            kmeans_anchors(&[(0.1, 0.1)], 2, 0),
            Err(DetectorError::TooFewBoxes { have: 1, need: 2 })
        ));
        assert!(matches!(
            kmeans_anchors(&[(0.0, 0.1), (0.1, 0.1)], 1, 0),
            Err(DetectorError::InvalidBox(_, _))
        ));
    }

    #[test]
    fn decode_tensor_places_boxes_in_cells() {
        let layout = TensorLayout {
            grid_sizes: vec![2],
            boxes_per_cell: 1,
            num_classes: 5,
        };
        let mut raw = vec![0.0; layout.len()];
        // Cell (cx=1, cy=0), centered in the cell, class 2.
        let (cx, cy) = (1, 0);
        let base = (cy * 2 + cx) * layout.slots_per_box();
        raw[base] = 0.9;
        raw[base + 1] = 0.5;
        raw[base + 2] = 0.5;
        raw[base + 3] = 0.3;
        raw[base + 4] = 0.2;
        raw[base + 5 + 2] = 2.0;

        let dets = decode_tensor(&raw, &layout, DEFAULT_CONFIDENCE_CUTOFF).unwrap();
        assert_eq!(dets.len(), 1);
        let d = &dets[0];
        assert_eq!(d.class, EmissionClass::ZigBee);
        assert!((d.bbox.x_center - 0.75).abs() < 1e-12);
        assert!((d.bbox.y_center - 0.25).abs() < 1e-12);
        assert!((d.bbox.width - 0.3).abs() < 1e-12);
        assert!((d.class_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((d.class_probs[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decode_tensor_respects_cutoff_and_length() {
        let layout = TensorLayout {
            grid_sizes: vec![2, 4],
            boxes_per_cell: 2,
            num_classes: 5,
        };
        assert_eq!(layout.len(), (4 + 16) * 2 * 10);
        let raw = vec![0.1; layout.len()];
        // All confidences below the cutoff.
        assert!(decode_tensor(&raw, &layout, 0.25).unwrap().is_empty());
        // And everything survives a zero cutoff.
        assert_eq!(
            decode_tensor(&raw, &layout, 0.0).unwrap().len(),
            20 * 2
        );

        let short = vec![0.0; layout.len() - 1];
        assert!(matches!(
            decode_tensor(&short, &layout, 0.25),
            Err(DetectorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn trim_profile_cuts_skirts_keeps_plateau() {
        // Peak plateau of 100s flanked by 1s: -20 dB, trimmed at -12.
        let profile = [1.0, 1.0, 100.0, 90.0, 100.0, 1.0];
        assert_eq!(trim_profile(&profile, 12.0), (2, 4));
        // Everything within 12 dB survives.
        let flat = [50.0, 80.0, 100.0, 70.0];
        assert_eq!(trim_profile(&flat, 12.0), (0, 3));
    }

    #[test]
    fn classify_by_bandwidth_hits_all_classes() {
        assert_eq!(classify_component(19.5e6, 100, 0.3), EmissionClass::WiFi);
        assert_eq!(classify_component(10.5e6, 54, 0.8), EmissionClass::Lightbridge);
        assert_eq!(classify_component(2.1e6, 11, 0.2), EmissionClass::ZigBee);
        assert_eq!(classify_component(1.1e6, 6, 0.15), EmissionClass::Bluetooth);
        // Persistent single-bin line.
        assert_eq!(classify_component(0.39e6, 2, 1.0), EmissionClass::Xpd);
        // Narrow but bursty: not the continuous transmitter.
        assert_eq!(classify_component(0.25e6, 2, 0.1), EmissionClass::Bluetooth);
    }

    #[test]
    fn detections_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        let dets = vec![
            Detection::new(EmissionClass::WiFi, b(0.5, 0.4, 0.2, 0.3), 0.875),
            Detection::new(EmissionClass::Xpd, b(0.25, 0.5, 0.002, 1.0), 0.5),
        ];
        write_detections(&path, &dets).unwrap();
        let back = read_detections(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].class, EmissionClass::WiFi);
        assert!((back[0].confidence - 0.875).abs() < 5e-7);
        assert!((back[1].bbox.width - 0.002).abs() < 5e-7);
    }

    #[test]
    fn detections_parser_reports_line_numbers() {
        let text = "0 0.5 0.5 0.2 0.2 0.9\n1 0.5 0.5 0.2 0.2\n";
        match parse_detections(text, "d.txt") {
            Err(DetectorError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }
}
