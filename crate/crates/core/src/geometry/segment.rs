use std::cmp::Ordering;

use crate::error::Result;
use crate::map::{BinaryMap, FeatureMap};

use super::polygon::Point;

pub const TW_MIN: f64 = 2.0;
pub const TW_MAX: f64 = 8.0;
pub const NMS_IOU: f64 = 0.5;

/// `clip(2, th / 4, 8)`.
pub fn tw_from_th(th: f64) -> f64 {
    (th / 4.0).clamp(TW_MIN, TW_MAX)
}

/// Rotated rectangle centred at `(x, y)`. `theta` is the direction of the
/// height axis; the width axis is perpendicular to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextSegment {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub w: f64,
    pub theta: f64,
    pub score: f64,
}

impl TextSegment {
    /// Corners in ring order, positive shoelace orientation.
    pub fn corners(&self) -> [Point; 4] {
        let u = Point::new(self.theta.cos(), self.theta.sin()).scale(self.h / 2.0);
        let v = Point::new(-self.theta.sin(), self.theta.cos()).scale(self.w / 2.0);
        let c = Point::new(self.x, self.y);
        [
            c.sub(u).sub(v),
            c.add(u).sub(v),
            c.add(u).add(v),
            c.sub(u).add(v),
        ]
    }

    pub fn area(&self) -> f64 {
        self.h * self.w
    }

    /// Inside or on the boundary, with a small tolerance for rounding.
    pub fn contains(&self, p: Point) -> bool {
        let d = p.sub(Point::new(self.x, self.y));
        let (s, c) = self.theta.sin_cos();
        let along_h = d.x * c + d.y * s;
        let along_w = -d.x * s + d.y * c;
        along_h.abs() <= self.h / 2.0 + 1e-9 && along_w.abs() <= self.w / 2.0 + 1e-9
    }

    fn radius(&self) -> f64 {
        0.5 * self.h.hypot(self.w)
    }
}

/// One segment per TC pixel: `h = th`, `w = tw_from_th(th)`, `theta = ta`,
/// scored by `score_map` at the pixel. Pixels with `th <= 0` are skipped.
pub fn propose_segments(tc: &BinaryMap, th: &FeatureMap, ta: &FeatureMap, score_map: Option<&FeatureMap>) -> Result<Vec<TextSegment>> {
    tc.check_spatial(th)?;
    tc.check_spatial(ta)?;
    if let Some(s) = score_map {
        tc.check_spatial(s)?;
    }
    let mut out = Vec::new();
    for y in 0..tc.height() {
        for x in 0..tc.width() {
            if !tc.get(x, y) {
                continue;
            }
            let h = th.get(0, x, y);
            if h <= 0.0 {
                continue;
            }
            out.push(TextSegment {
                x: x as f64,
                y: y as f64,
                h,
                w: tw_from_th(h),
                theta: ta.get(0, x, y),
                score: score_map.map_or(1.0, |s| s.get(s.channels() - 1, x, y)),
            });
        }
    }
    Ok(out)
}

fn shoelace(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|k| poly[k].cross(poly[(k + 1) % n])).sum::<f64>()
}

/// Sutherland-Hodgman clip of a convex `subject` by a convex, positively
/// oriented `clip` ring.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out = subject.to_vec();
    let n = clip.len();
    for k in 0..n {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[k], clip[(k + 1) % n]);
        let edge = b.sub(a);
        let side = |p: Point| edge.cross(p.sub(a));
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: Point, q: Point, sp: f64, sq: f64) -> Point {
    let t = sp / (sp - sq);
    p.add(q.sub(p).scale(t))
}

/// Exact intersection area of two rotated rectangles.
pub fn intersection_area(a: &TextSegment, b: &TextSegment) -> f64 {
    if Point::new(a.x, a.y).dist(Point::new(b.x, b.y)) > a.radius() + b.radius() {
        return 0.0;
    }
    shoelace(&clip_convex(&a.corners(), &b.corners())).abs()
}

pub fn rotated_iou(a: &TextSegment, b: &TextSegment) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy suppression in descending score order (input order breaks ties).
/// Survivors keep their relative score order.
///
/// Kept segments are bucketed on a grid by bounding box; two segments whose
/// bounding circles overlap always share a cell, so only those are compared.
pub fn nms_segments(segs: &[TextSegment], iou_threshold: f64) -> Vec<TextSegment> {
    const CELL: f64 = 8.0;
    let mut order: Vec<usize> = (0..segs.len()).collect();
    order.sort_by(|&i, &j| segs[j].score.partial_cmp(&segs[i].score).unwrap_or(Ordering::Equal).then(i.cmp(&j)));
    let span: Vec<(i64, i64, i64, i64)> = segs
        .iter()
        .map(|s| {
            let r = s.radius();
            let lo = |v: f64| ((v - r) / CELL).floor() as i64;
            let hi = |v: f64| ((v + r) / CELL).floor() as i64;
            (lo(s.x), lo(s.y), hi(s.x), hi(s.y))
        })
        .collect();
    let gx0 = span.iter().map(|c| c.0).min().unwrap_or(0);
    let gy0 = span.iter().map(|c| c.1).min().unwrap_or(0);
    let gw = (span.iter().map(|c| c.2).max().unwrap_or(0) - gx0 + 1).max(1) as usize;
    let gh = (span.iter().map(|c| c.3).max().unwrap_or(0) - gy0 + 1).max(1) as usize;
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); gw * gh];
    let cell = |cx: i64, cy: i64| (cy - gy0) as usize * gw + (cx - gx0) as usize;
    let mut kept: Vec<TextSegment> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for (stamp, k) in order.into_iter().enumerate() {
        let s = segs[k];
        let (x0, y0, x1, y1) = span[k];
        let mut suppressed = false;
        'scan: for cy in y0..=y1 {
            for cx in x0..=x1 {
                for &t in &grid[cell(cx, cy)] {
                    if seen[t] == stamp + 1 {
                        continue;
                    }
                    seen[t] = stamp + 1;
                    // IoU never exceeds the smaller area over the larger one
                    let (a, b) = (s.area(), kept[t].area());
                    if a.min(b) <= iou_threshold * a.max(b) {
                        continue;
                    }
                    if rotated_iou(&s, &kept[t]) > iou_threshold {
                        suppressed = true;
                        break 'scan;
                    }
                }
            }
        }
        if suppressed {
            continue;
        }
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                grid[cell(cx, cy)].push(kept.len());
            }
        }
        kept.push(s);
        seen.push(0);
    }
    kept
}

/// Union of the filled segments; a pixel is set when its centre is inside.
pub fn rasterize_segments(segs: &[TextSegment], width: usize, height: usize) -> FeatureMap {
    let mut m = FeatureMap::zeros(1, width, height);
    for s in segs {
        let r = s.radius();
        let x0 = (s.x - r).floor().max(0.0) as usize;
        let y0 = (s.y - r).floor().max(0.0) as usize;
        let x1 = ((s.x + r).ceil().max(0.0) as usize).min(width.saturating_sub(1));
        let y1 = ((s.y + r).ceil().max(0.0) as usize).min(height.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                if s.contains(Point::new(x as f64, y as f64)) {
                    m.set(0, x, y, 1.0);
                }
            }
        }
    }
    m
}
