use crate::error::{Error, Result};

use super::polygon::{Point, TextPolygon};

pub const SAMPLE_STEP: f64 = 4.0;

/// Lower long side of an annotated text polygon, ordered by increasing x.
///
/// A ring of `2K` vertices (`K >= 3`) is read as two long sides, vertices
/// `[0, K)` and `[K, 2K)`. A quadrilateral uses its longer pair of opposite
/// edges, preferring the more horizontal pair on a tie. The side with the
/// greater mean y (lower on screen) is returned.
pub fn bottom_long_side(p: &TextPolygon) -> Result<Vec<Point>> {
    let v = p.vertices();
    let n = v.len();
    if !n.is_multiple_of(2) {
        return Err(Error::AnnotationFormat(format!(
            "{n} vertices cannot be split into two long sides"
        )));
    }
    let (a, b): (Vec<Point>, Vec<Point>) = if n == 4 {
        let len = |k: usize| v[k].dist(v[(k + 1) % 4]);
        let flat = |k: usize| {
            let d = v[(k + 1) % 4].sub(v[k]);
            d.x.abs() - d.y.abs()
        };
        let pair02 = len(0) + len(2);
        let pair13 = len(1) + len(3);
        let use02 = if (pair02 - pair13).abs() > 1e-9 {
            pair02 > pair13
        } else {
            flat(0) + flat(2) >= flat(1) + flat(3)
        };
        if use02 {
            (vec![v[0], v[1]], vec![v[2], v[3]])
        } else {
            (vec![v[1], v[2]], vec![v[3], v[0]])
        }
    } else {
        (v[..n / 2].to_vec(), v[n / 2..].to_vec())
    };
    let mean_y = |s: &[Point]| s.iter().map(|p| p.y).sum::<f64>() / s.len() as f64;
    let (ya, yb) = (mean_y(&a), mean_y(&b));
    if (ya - yb).abs() < 1e-9 {
        return Err(Error::AnnotationFormat("long sides are level; bottom side is ambiguous".into()));
    }
    let mut bottom = if ya > yb { a } else { b };
    if bottom.first().unwrap().x > bottom.last().unwrap().x {
        bottom.reverse();
    }
    Ok(bottom)
}

/// Cuts `line` at arclength multiples of `step` and returns the chords
/// between consecutive cut points (endpoints included). A remainder shorter
/// than `step` is kept as the final segment.
pub fn sample_bottom(line: &[Point], step: f64) -> Result<Vec<(Point, Point)>> {
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("sampling step {step} must be positive")));
    }
    let total: f64 = line.windows(2).map(|w| w[0].dist(w[1])).sum();
    if line.len() < 2 || total <= 1e-12 {
        return Err(Error::EmptyPolyline);
    }
    let mut cuts = vec![line[0]];
    let mut next = step;
    let mut walked = 0.0;
    for w in line.windows(2) {
        let len = w[0].dist(w[1]);
        while next < walked + len && total - next > 1e-9 {
            let t = (next - walked) / len;
            cuts.push(w[0].add(w[1].sub(w[0]).scale(t)));
            next += step;
        }
        walked += len;
    }
    cuts.push(*line.last().unwrap());
    Ok(cuts.windows(2).map(|w| (w[0], w[1])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(c: &[(f64, f64)]) -> Vec<Point> {
        c.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn rectangle_bottom_edge() {
        let r = TextPolygon::rect(0.0, 0.0, 30.0, 10.0).unwrap();
        assert_eq!(bottom_long_side(&r).unwrap(), pts(&[(0.0, 10.0), (30.0, 10.0)]));
        // tall rectangle: long sides are vertical, the lower one by mean y is ambiguous
        let tall = TextPolygon::rect(0.0, 0.0, 5.0, 30.0).unwrap();
        assert!(bottom_long_side(&tall).is_err());
    }

    #[test]
    fn fourteen_point_arc_returns_lower_seven_in_reading_order() {
        let xs: Vec<f64> = (0..7).map(|k| 10.0 * k as f64).collect();
        let arc = |x: f64| 20.0 + 0.004 * (x - 30.0) * (x - 30.0);
        let mut ring: Vec<(f64, f64)> = xs.iter().map(|&x| (x, arc(x) - 8.0)).collect();
        ring.extend(xs.iter().rev().map(|&x| (x, arc(x))));
        let poly = TextPolygon::from_xy(&ring).unwrap();
        let bottom = bottom_long_side(&poly).unwrap();
        assert_eq!(bottom.len(), 7);
        for (k, p) in bottom.iter().enumerate() {
            assert_eq!(p.x, xs[k]);
            assert_eq!(p.y, arc(xs[k]));
        }
    }

    #[test]
    fn upside_down_listing_still_picks_greater_mean_y() {
        // lower side listed first, running right to left
        let lower = [(40.0, 30.0), (20.0, 34.0), (0.0, 30.0)];
        let upper = [(0.0, 22.0), (20.0, 26.0), (40.0, 22.0)];
        let ring: Vec<(f64, f64)> = lower.iter().chain(&upper).copied().collect();
        let poly = TextPolygon::from_xy(&ring).unwrap();
        assert_eq!(bottom_long_side(&poly).unwrap(), pts(&[(0.0, 30.0), (20.0, 34.0), (40.0, 30.0)]));
    }

    #[test]
    fn odd_vertex_count_is_rejected() {
        let tri = TextPolygon::from_xy(&[(0.0, 0.0), (10.0, 0.0), (5.0, 5.0)]).unwrap();
        assert!(matches!(bottom_long_side(&tri), Err(Error::AnnotationFormat(_))));
    }

    #[test]
    fn segment_counts() {
        let line = |len: f64| pts(&[(0.0, 0.0), (len, 0.0)]);
        assert_eq!(sample_bottom(&line(12.0), SAMPLE_STEP).unwrap().len(), 3);
        let thirteen = sample_bottom(&line(13.0), SAMPLE_STEP).unwrap();
        assert_eq!(thirteen.len(), 4);
        assert_eq!(thirteen[3], (Point::new(12.0, 0.0), Point::new(13.0, 0.0)));
        assert_eq!(sample_bottom(&line(3.0), SAMPLE_STEP).unwrap().len(), 1);
        assert!(matches!(sample_bottom(&line(0.0), SAMPLE_STEP), Err(Error::EmptyPolyline)));
        assert!(matches!(sample_bottom(&pts(&[(1.0, 1.0)]), SAMPLE_STEP), Err(Error::EmptyPolyline)));
    }

    #[test]
    fn cuts_follow_arclength_across_vertices() {
        let l = pts(&[(0.0, 0.0), (3.0, 0.0), (3.0, 5.0)]);
        let segs = sample_bottom(&l, SAMPLE_STEP).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].1, Point::new(3.0, 1.0));
    }
}
