use std::cmp::Ordering;

use crate::geometry::TextPolygon;

pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectionReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl DetectionReport {
    /// Report from raw counts; empty denominators give 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_measure = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        DetectionReport {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f_measure,
        }
    }

    /// Pools counts; the ratios are recomputed from the totals.
    pub fn merge(&self, other: &DetectionReport) -> DetectionReport {
        DetectionReport::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

/// Pixel-set IoU of two row-major sorted pixel lists.
fn pixel_iou(a: &[(i64, i64)], b: &[(i64, i64)]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match (a[i].1, a[i].0).cmp(&(b[j].1, b[j].0)) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn vertex_key(p: &TextPolygon) -> Vec<(f64, f64)> {
    p.vertices().iter().map(|v| (v.x, v.y)).collect()
}

fn key_cmp(a: &[(f64, f64)], b: &[(f64, f64)]) -> Ordering {
    for (p, q) in a.iter().zip(b) {
        let o = p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Greedy one-to-one matching at IoU >= `threshold`, highest IoU first.
///
/// IoU is measured on the pixels each polygon covers. Ties are broken by
/// polygon geometry, not list position, so reordering either list never
/// changes the counts.
pub fn evaluate(detections: &[TextPolygon], truths: &[TextPolygon], threshold: f64) -> DetectionReport {
    let det_px: Vec<Vec<(i64, i64)>> = detections.iter().map(|p| p.pixels()).collect();
    let gt_px: Vec<Vec<(i64, i64)>> = truths.iter().map(|p| p.pixels()).collect();
    let det_key: Vec<_> = detections.iter().map(vertex_key).collect();
    let gt_key: Vec<_> = truths.iter().map(vertex_key).collect();
    let mut pairs = Vec::new();
    for (d, dp) in det_px.iter().enumerate() {
        for (t, tp) in gt_px.iter().enumerate() {
            let iou = pixel_iou(dp, tp);
            if iou >= threshold {
                pairs.push((iou, d, t));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| key_cmp(&det_key[a.1], &det_key[b.1]))
            .then_with(|| key_cmp(&gt_key[a.2], &gt_key[b.2]))
    });
    let mut det_used = vec![false; detections.len()];
    let mut gt_used = vec![false; truths.len()];
    let mut tp = 0;
    for (_, d, t) in pairs {
        if !det_used[d] && !gt_used[t] {
            det_used[d] = true;
            gt_used[t] = true;
            tp += 1;
        }
    }
    DetectionReport::from_counts(tp, detections.len() - tp, truths.len() - tp)
}
