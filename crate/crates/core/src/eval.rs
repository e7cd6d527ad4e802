//! Single-category detection evaluation with COCO semantics: greedy
//! score-ordered matching, precision/recall accumulation and 101-point
//! interpolated average precision.
//!
//! Differences from the reference COCO tooling are deliberate: there is no
//! `maxDets` cap, no area ranges, no crowd handling, and score ties are
//! broken by detection input index so results never depend on sort stability.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CocoDataset, TOWER_CATEGORY_ID};
use crate::geo::{iou, GeoError, PixelBox};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("detection references unknown image id {0}")]
    UnknownImageId(u64),
    #[error("average precision is undefined without ground truth")]
    UndefinedAp,
    #[error("invalid detection #{index}: {reason}")]
    InvalidDetection { index: usize, reason: String },
    #[error("predictions JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: PixelBox,
    pub score: f64,
}

/// One entry of a COCO results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectionRecord {
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    score: f64,
}

/// Parses a COCO results array.
pub fn detections_from_json(bytes: &[u8]) -> Result<Vec<Detection>, EvalError> {
    let records: Vec<DetectionRecord> = serde_json::from_slice(bytes)?;
    records
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            let [x, y, w, h] = r.bbox;
            let bbox = PixelBox::new(x, y, w, h)
                .map_err(|e: GeoError| EvalError::InvalidDetection { index, reason: e.to_string() })?;
            if !(0.0..=1.0).contains(&r.score) {
                return Err(EvalError::InvalidDetection { index, reason: format!("score {} outside [0, 1]", r.score) });
            }
            Ok(Detection { image_id: r.image_id, category_id: r.category_id, bbox, score: r.score })
        })
        .collect()
}

/// Serializes detections as a COCO results array with 2-decimal boxes and
/// 6-decimal scores.
pub fn detections_to_json(dets: &[Detection]) -> String {
    let r2 = |v: f64| (v * 100.0).round() / 100.0;
    let records: Vec<DetectionRecord> = dets
        .iter()
        .map(|d| DetectionRecord {
            image_id: d.image_id,
            category_id: d.category_id,
            bbox: [r2(d.bbox.x), r2(d.bbox.y), r2(d.bbox.w), r2(d.bbox.h)],
            score: (d.score * 1e6).round() / 1e6,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&records).expect("detections serialize");
    s.push('\n');
    s
}

/// Processing order: descending score, ties by ascending index.
fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy matching on one image against a precomputed `ious[det][gt]` table.
fn match_with_ious(ious: &[Vec<f64>], scores: &[f64], n_gt: usize, iou_thr: f64) -> Vec<(usize, Option<usize>)> {
    let mut taken = vec![false; n_gt];
    score_order(scores)
        .into_iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &v) in ious[d].iter().enumerate() {
                if taken[g] || v < iou_thr {
                    continue;
                }
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            (d, best.map(|(g, _)| g))
        })
        .collect()
}

/// Matches one image's detections to its ground truth. Detections are visited
/// by descending score; each takes the unmatched ground truth with the highest
/// IoU at or above `iou_thr` (lowest index on IoU ties). Returns
/// `(detection index, matched gt index)` in visiting order.
pub fn match_detections(gts: &[PixelBox], dets: &[(PixelBox, f64)], iou_thr: f64) -> Vec<(usize, Option<usize>)> {
    let ious: Vec<Vec<f64>> = dets.iter().map(|(d, _)| gts.iter().map(|g| iou(d, g)).collect()).collect();
    let scores: Vec<f64> = dets.iter().map(|(_, s)| *s).collect();
    match_with_ious(&ious, &scores, gts.len(), iou_thr)
}

/// A scored detection outcome ready for global ranking. `rank_key` breaks
/// score ties (lower first).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredMatch {
    pub score: f64,
    pub rank_key: usize,
    pub true_positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)` after each ranked detection.
    pub points: Vec<(f64, f64)>,
    pub n_gt: usize,
}

impl PrCurve {
    pub fn is_undefined(&self) -> bool {
        self.n_gt == 0
    }
}

pub fn pr_curve(matches: &[ScoredMatch], n_gt: usize) -> PrCurve {
    if n_gt == 0 && matches.is_empty() {
        return PrCurve { points: Vec::new(), n_gt };
    }
    let mut ranked: Vec<&ScoredMatch> = matches.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.rank_key.cmp(&b.rank_key)));
    let (mut tp, mut fp) = (0usize, 0usize);
    let points = ranked
        .into_iter()
        .map(|m| {
            if m.true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
            (recall, tp as f64 / (tp + fp) as f64)
        })
        .collect();
    PrCurve { points, n_gt }
}

pub const RECALL_SAMPLES: usize = 101;

/// Mean over r = 0.00, 0.01, ..., 1.00 of the highest precision reached at
/// recall >= r (zero when recall r is never reached).
pub fn average_precision(curve: &PrCurve) -> Result<f64, EvalError> {
    if curve.is_undefined() {
        return Err(EvalError::UndefinedAp);
    }
    let pts = &curve.points;
    // Precision envelope: max precision from each point onward.
    let mut envelope: Vec<f64> = pts.iter().map(|&(_, p)| p).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let total: f64 = (0..RECALL_SAMPLES)
        .map(|i| {
            let r = i as f64 / 100.0;
            let first = pts.partition_point(|&(rec, _)| rec < r);
            envelope.get(first).copied().unwrap_or(0.0)
        })
        .sum();
    Ok(total / RECALL_SAMPLES as f64)
}

/// IoU thresholds averaged into `ap`: 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

pub const LOOSE_THRESHOLD: f64 = 0.15;

/// Metric bundle, scaled x100. Values are kept unrounded; the writers round
/// to one decimal.
#[derive(Debug, Clone, PartialEq)]
pub struct ApReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap15: f64,
    /// `(threshold, AP x100)` for 0.15 then 0.50..0.95.
    pub per_threshold: Vec<(f64, f64)>,
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

impl ApReport {
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.per_threshold.iter().find(|(t, _)| (t - threshold).abs() < 1e-12).map(|&(_, v)| v)
    }

    /// `(metric, value)` rows rounded to one decimal.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("ap".to_string(), round1(self.ap)),
            ("ap50".to_string(), round1(self.ap50)),
            ("ap15".to_string(), round1(self.ap15)),
        ];
        rows.extend(self.per_threshold.iter().map(|&(t, v)| (format!("ap@{t:.2}"), round1(v))));
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in self.rows() {
            s.push_str(&format!("{k},{v:.1}\n"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        let per: serde_json::Map<String, serde_json::Value> = self
            .per_threshold
            .iter()
            .map(|&(t, v)| (format!("{t:.2}"), serde_json::json!(round1(v))))
            .collect();
        let doc = serde_json::json!({
            "ap": round1(self.ap),
            "ap50": round1(self.ap50),
            "ap15": round1(self.ap15),
            "per_threshold": per,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Per-image IoU tables shared across thresholds.
struct PreparedImage {
    n_gt: usize,
    ious: Vec<Vec<f64>>,
    scores: Vec<f64>,
    /// Position of each detection in the caller's list.
    input_index: Vec<usize>,
}

fn prepare(ds: &CocoDataset, dets: &[Detection]) -> Result<(Vec<PreparedImage>, usize), EvalError> {
    let mut slot: HashMap<u64, usize> = HashMap::new();
    let mut gts: Vec<Vec<PixelBox>> = Vec::with_capacity(ds.images.len());
    for img in &ds.images {
        slot.insert(img.id, gts.len());
        gts.push(Vec::new());
    }
    let mut n_gt = 0;
    for a in ds.annotations.iter().filter(|a| a.category_id == TOWER_CATEGORY_ID && a.iscrowd == 0) {
        let [x, y, w, h] = a.bbox;
        if let Some(&s) = slot.get(&a.image_id) {
            gts[s].push(PixelBox { x, y, w, h });
            n_gt += 1;
        }
    }
    let mut per_image: Vec<Vec<usize>> = vec![Vec::new(); gts.len()];
    for (i, d) in dets.iter().enumerate() {
        let s = *slot.get(&d.image_id).ok_or(EvalError::UnknownImageId(d.image_id))?;
        if d.category_id == TOWER_CATEGORY_ID {
            per_image[s].push(i);
        }
    }
    let prepared = gts
        .into_iter()
        .zip(per_image)
        .map(|(g, idx)| PreparedImage {
            n_gt: g.len(),
            ious: idx.iter().map(|&i| g.iter().map(|gb| iou(&dets[i].bbox, gb)).collect()).collect(),
            scores: idx.iter().map(|&i| dets[i].score).collect(),
            input_index: idx,
        })
        .collect();
    Ok((prepared, n_gt))
}

fn ap_at(images: &[PreparedImage], n_gt: usize, thr: f64) -> Result<f64, EvalError> {
    let mut matches = Vec::new();
    for img in images {
        for (d, gt) in match_with_ious(&img.ious, &img.scores, img.n_gt, thr) {
            matches.push(ScoredMatch { score: img.scores[d], rank_key: img.input_index[d], true_positive: gt.is_some() });
        }
    }
    average_precision(&pr_curve(&matches, n_gt))
}

/// AP (fraction in [0, 1]) at each requested IoU threshold.
pub fn ap_per_threshold(ds: &CocoDataset, dets: &[Detection], thresholds: &[f64]) -> Result<Vec<f64>, EvalError> {
    let (images, n_gt) = prepare(ds, dets)?;
    thresholds.iter().map(|&t| ap_at(&images, n_gt, t)).collect()
}

pub fn evaluate(ds: &CocoDataset, dets: &[Detection]) -> Result<ApReport, EvalError> {
    let mut thresholds = vec![LOOSE_THRESHOLD];
    thresholds.extend(coco_thresholds());
    let aps = ap_per_threshold(ds, dets, &thresholds)?;
    let per_threshold: Vec<(f64, f64)> = thresholds.iter().zip(&aps).map(|(&t, &a)| (t, 100.0 * a)).collect();
    let ap = 100.0 * aps[1..].iter().sum::<f64>() / 10.0;
    Ok(ApReport { ap, ap50: 100.0 * aps[1], ap15: 100.0 * aps[0], per_threshold })
}
