//! Detection scoring: greedy IoU matching, average precision, mAP
//! reports with SNR-bucket breakdowns.
//!
//! Matching is per image; precision/recall curves pool the resulting
//! events per class across images. AP uses all-points interpolation (the
//! area under the precision envelope), and mAP averages over the classes
//! that actually appear in the ground truth.

use crate::dataset::Annotation;
use crate::detector::{iou, Detection};
use crate::emission::{EmissionClass, SnrBucket};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

pub const DEFAULT_IOU_THRESHOLDS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ground truth for class {0}")]
    NoGroundTruth(EmissionClass),
}

/// One scored detection: was it a true positive, and under which SNR
/// bucket does it count?
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchEvent {
    pub confidence: f64,
    pub class: EmissionClass,
    pub is_tp: bool,
    /// True positives inherit the matched truth's bucket; false positives
    /// the bucket of the image's strongest truth, if any.
    pub bucket: Option<SnrBucket>,
}

/// Match events plus ground-truth counts, pooled over one or more images.
#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    pub events: Vec<MatchEvent>,
    pub gt_per_class: [usize; EmissionClass::COUNT],
    pub gt_per_class_bucket: [[usize; 3]; EmissionClass::COUNT],
}

impl MatchResult {
    pub fn merge(&mut self, other: MatchResult) {
        self.events.extend(other.events);
        for c in 0..EmissionClass::COUNT {
            self.gt_per_class[c] += other.gt_per_class[c];
            for b in 0..3 {
                self.gt_per_class_bucket[c][b] += other.gt_per_class_bucket[c][b];
            }
        }
    }
}

fn bucket_index(b: SnrBucket) -> usize {
    match b {
        SnrBucket::Low => 0,
        SnrBucket::Mid => 1,
        SnrBucket::High => 2,
    }
}

/// Greedily matches detections against ground truth on one image.
///
/// Detections are visited in descending confidence. A detection is a true
/// positive when an unmatched truth of the same class overlaps it with
/// IoU at or above the threshold; among candidates the highest IoU wins.
/// Each truth matches at most once; duplicates become false positives.
pub fn match_detections(
    detections: &[Detection],
    truths: &[Annotation],
    iou_threshold: f64,
) -> MatchResult {
    let mut result = MatchResult::default();
    for t in truths {
        let c = t.class.class_id() as usize;
        result.gt_per_class[c] += 1;
        if let Some(bucket) = t.snr_db.and_then(SnrBucket::of_snr_db) {
            result.gt_per_class_bucket[c][bucket_index(bucket)] += 1;
        }
    }

    // False positives on this image count against the conditions the
    // image represents: the bucket of its strongest emission.
    let image_bucket = truths
        .iter()
        .filter_map(|t| t.snr_db)
        .max_by(f64::total_cmp)
        .and_then(SnrBucket::of_snr_db);

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].confidence.total_cmp(&detections[a].confidence));

    let mut taken = vec![false; truths.len()];
    for &di in &order {
        let det = &detections[di];
        let mut best: Option<(usize, f64)> = None;
        for (ti, t) in truths.iter().enumerate() {
            if taken[ti] || t.class != det.class {
                continue;
            }
            let overlap = iou(&det.bbox, &t.bbox);
            if overlap >= iou_threshold && best.map_or(true, |(_, b)| overlap > b) {
                best = Some((ti, overlap));
            }
        }
        match best {
            Some((ti, _)) => {
                taken[ti] = true;
                result.events.push(MatchEvent {
                    confidence: det.confidence,
                    class: det.class,
                    is_tp: true,
                    bucket: truths[ti].snr_db.and_then(SnrBucket::of_snr_db),
                });
            }
            None => result.events.push(MatchEvent {
                confidence: det.confidence,
                class: det.class,
                is_tp: false,
                bucket: image_bucket,
            }),
        }
    }
    result
}

fn ap_from_events(events: &mut Vec<(f64, bool)>, gt: usize) -> f64 {
    if gt == 0 {
        return 0.0;
    }
    events.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(events.len()); // (recall, precision)
    for (rank, &(_, is_tp)) in events.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        points.push((tp as f64 / gt as f64, tp as f64 / (rank + 1) as f64));
    }

    // Walk ranks backwards carrying the precision envelope; each rank
    // closes the recall segment opened at the previous rank.
    let mut ap = 0.0;
    let mut env = 0.0f64;
    for i in (0..points.len()).rev() {
        let (recall, precision) = points[i];
        env = env.max(precision);
        let prev = if i == 0 { 0.0 } else { points[i - 1].0 };
        if recall > prev {
            ap += (recall - prev) * env;
        }
    }
    ap
}

/// Average precision for one class from pooled match events.
pub fn average_precision(result: &MatchResult, class: EmissionClass) -> Result<f64, EvalError> {
    let gt = result.gt_per_class[class.class_id() as usize];
    if gt == 0 {
        return Err(EvalError::NoGroundTruth(class));
    }
    let mut events: Vec<(f64, bool)> = result
        .events
        .iter()
        .filter(|e| e.class == class)
        .map(|e| (e.confidence, e.is_tp))
        .collect();
    Ok(ap_from_events(&mut events, gt))
}

fn bucket_average_precision(
    result: &MatchResult,
    class: EmissionClass,
    bucket: SnrBucket,
) -> Option<f64> {
    let gt = result.gt_per_class_bucket[class.class_id() as usize][bucket_index(bucket)];
    if gt == 0 {
        return None;
    }
    let mut events: Vec<(f64, bool)> = result
        .events
        .iter()
        .filter(|e| e.class == class && e.bucket == Some(bucket))
        .map(|e| (e.confidence, e.is_tp))
        .collect();
    Some(ap_from_events(&mut events, gt))
}

/// Per-class APs at each threshold. `None` marks a class with no ground
/// truth under the table's conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApTable {
    pub per_class: Vec<ClassAp>,
    /// Mean over classes with ground truth, aligned with the thresholds.
    pub map: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: EmissionClass,
    pub ap: Vec<Option<f64>>,
}

/// Full evaluation report over a set of images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_thresholds: Vec<f64>,
    pub images: usize,
    pub overall: ApTable,
    /// Tables restricted to truths (and attributable false positives) of
    /// one SNR bucket; present only when any truth carries an SNR.
    pub buckets: Vec<(SnrBucket, ApTable)>,
}

impl EvalReport {
    /// mAP at a given threshold (must be one of `iou_thresholds`).
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.iou_thresholds
            .iter()
            .position(|t| (t - threshold).abs() < 1e-12)
            .map(|i| self.overall.map[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table, one row per class, one column per threshold.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let fmt_row = |out: &mut String, name: &str, cells: &[String]| {
            write!(out, "{name:<12}").unwrap();
            for c in cells {
                write!(out, " {c:>8}").unwrap();
            }
            out.push('\n');
        };
        let header: Vec<String> = self
            .iou_thresholds
            .iter()
            .map(|t| format!("AP@{t:.2}"))
            .collect();
        let table = |out: &mut String, title: &str, t: &ApTable| {
            writeln!(out, "{title}").unwrap();
            fmt_row(out, "class", &header);
            for row in &t.per_class {
                let cells: Vec<String> = row
                    .ap
                    .iter()
                    .map(|a| match a {
                        Some(v) => format!("{v:.4}"),
                        None => "-".to_string(),
                    })
                    .collect();
                fmt_row(out, row.class.name(), &cells);
            }
            let cells: Vec<String> = t.map.iter().map(|v| format!("{v:.4}")).collect();
            fmt_row(out, "mAP", &cells);
        };

        table(&mut out, &format!("overall ({} images)", self.images), &self.overall);
        for (bucket, t) in &self.buckets {
            out.push('\n');
            let (lo, hi) = bucket.range_db();
            let range = if hi.is_finite() {
                format!("[{lo:.0}, {hi:.0}) dB")
            } else {
                format!("[{lo:.0}, inf) dB")
            };
            table(&mut out, &format!("{} SNR {range}", bucket.name()), t);
        }
        out
    }
}

/// Matches and scores a set of images at several IoU thresholds.
pub fn evaluate(
    images: &[(Vec<Detection>, Vec<Annotation>)],
    iou_thresholds: &[f64],
) -> EvalReport {
    let mut overall_tables: Vec<ApTable> = Vec::new();
    let mut bucket_tables: Vec<Vec<ApTable>> = vec![Vec::new(); 3];
    let mut any_bucketed = false;

    for &threshold in iou_thresholds {
        let mut pooled = MatchResult::default();
        for (dets, truths) in images {
            pooled.merge(match_detections(dets, truths, threshold));
        }
        any_bucketed |= pooled.gt_per_class_bucket.iter().flatten().any(|&n| n > 0);
        overall_tables.push(single_threshold_table(&pooled, None));
        for bucket in SnrBucket::ALL {
            bucket_tables[bucket_index(bucket)]
                .push(single_threshold_table(&pooled, Some(bucket)));
        }
    }

    let buckets = if any_bucketed {
        SnrBucket::ALL
            .iter()
            .filter_map(|&b| {
                let tables = &bucket_tables[bucket_index(b)];
                // Skip buckets that never occur.
                if tables
                    .iter()
                    .all(|t| t.per_class.iter().all(|c| c.ap.iter().all(Option::is_none)))
                {
                    return None;
                }
                Some((b, merge_threshold_tables(tables)))
            })
            .collect()
    } else {
        Vec::new()
    };

    EvalReport {
        iou_thresholds: iou_thresholds.to_vec(),
        images: images.len(),
        overall: merge_threshold_tables(&overall_tables),
        buckets,
    }
}

/// AP table for one threshold (single-column); columns are merged later.
fn single_threshold_table(pooled: &MatchResult, bucket: Option<SnrBucket>) -> ApTable {
    let mut per_class = Vec::new();
    let mut aps = Vec::new();
    for class in EmissionClass::ALL {
        let ap = match bucket {
            None => average_precision(pooled, class).ok(),
            Some(b) => bucket_average_precision(pooled, class, b),
        };
        if let Some(v) = ap {
            aps.push(v);
        }
        per_class.push(ClassAp {
            class,
            ap: vec![ap],
        });
    }
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    ApTable {
        per_class,
        map: vec![map],
    }
}

fn merge_threshold_tables(tables: &[ApTable]) -> ApTable {
    let mut per_class: Vec<ClassAp> = EmissionClass::ALL
        .iter()
        .map(|&class| ClassAp {
            class,
            ap: Vec::new(),
        })
        .collect();
    let mut map = Vec::new();
    for t in tables {
        for (dst, src) in per_class.iter_mut().zip(&t.per_class) {
            dst.ap.extend(src.ap.iter().copied());
        }
        map.extend(t.map.iter().copied());
    }
    ApTable { per_class, map }
}
