use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::Result;
use crate::map::{BinaryMap, FeatureMap};

use super::polygon::{shrink_polygon, Point, TextPolygon};
use super::side::{bottom_long_side, sample_bottom, SAMPLE_STEP};

pub const SHRINK_RATIO: f64 = 0.2;

/// Ground-truth maps: `tr` and `tc` as (background, text) one-hot pairs,
/// `th` and `ta` single-channel and zero outside `tc`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoMaps {
    pub tr: FeatureMap,
    pub tc: FeatureMap,
    pub th: FeatureMap,
    pub ta: FeatureMap,
}

impl GeoMaps {
    pub fn tr_mask(&self) -> BinaryMap {
        BinaryMap::from_fn(self.tr.width(), self.tr.height(), |x, y| self.tr.get(1, x, y) > 0.5)
    }

    pub fn tc_mask(&self) -> BinaryMap {
        BinaryMap::from_fn(self.tc.width(), self.tc.height(), |x, y| self.tc.get(1, x, y) > 0.5)
    }
}

/// Folds an angle into `[-pi/2, pi/2)`.
pub fn fold_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    if t >= FRAC_PI_2 {
        t -= PI;
    }
    t
}

/// Distance from `p` to segment `ab` and the foot of the perpendicular.
fn nearest_on_segment(p: Point, a: Point, b: Point) -> (f64, Point) {
    let ab = b.sub(a);
    let l2 = ab.dot(ab);
    let t = if l2 > 0.0 { (p.sub(a).dot(ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let foot = a.add(ab.scale(t));
    (p.dist(foot), foot)
}

/// Builds TR/TC/TH/TA for `polys` on a `width x height` grid.
///
/// TC is each polygon shrunk by [`SHRINK_RATIO`]; instances that collapse
/// contribute only to TR. For a TC pixel, TH is twice the distance to the
/// nearest chord of the sampled bottom side and TA is the direction of that
/// distance line (foot towards pixel), folded into `[-pi/2, pi/2)`. A pixel
/// on the bottom side takes the chord's upward normal. Later polygons
/// overwrite earlier ones where they overlap.
pub fn build_tc_th_ta(polys: &[TextPolygon], width: usize, height: usize) -> Result<GeoMaps> {
    let mut tr = BinaryMap::zeros(width, height);
    let mut tc = BinaryMap::zeros(width, height);
    let mut th = FeatureMap::zeros(1, width, height);
    let mut ta = FeatureMap::zeros(1, width, height);
    for poly in polys {
        poly.rasterize_into(&mut tr);
        let Some(shrunk) = shrink_polygon(poly, SHRINK_RATIO)? else {
            continue;
        };
        let segments = sample_bottom(&bottom_long_side(poly)?, SAMPLE_STEP)?;
        let region = shrunk.rasterize(width, height);
        for y in 0..height {
            for x in 0..width {
                if !region.get(x, y) {
                    continue;
                }
                let p = Point::new(x as f64, y as f64);
                let (mut best, mut foot, mut seg) = (f64::INFINITY, p, segments[0]);
                for &(a, b) in &segments {
                    let (d, f) = nearest_on_segment(p, a, b);
                    if d < best {
                        (best, foot, seg) = (d, f, (a, b));
                    }
                }
                let dir = if best > 1e-12 {
                    p.sub(foot)
                } else {
                    let t = seg.1.sub(seg.0);
                    Point::new(t.y, -t.x)
                };
                tc.set(x, y, true);
                th.set(0, x, y, 2.0 * best);
                ta.set(0, x, y, fold_angle(dir.y.atan2(dir.x)));
            }
        }
    }
    Ok(GeoMaps {
        tr: one_hot(&tr),
        tc: one_hot(&tc),
        th,
        ta,
    })
}

fn one_hot(m: &BinaryMap) -> FeatureMap {
    FeatureMap::from_fn(2, m.width(), m.height(), |c, x, y| {
        let on = m.get(x, y) as u8 as f64;
        if c == 1 {
            on
        } else {
            1.0 - on
        }
    })
}
