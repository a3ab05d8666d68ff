use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::map::BinaryMap;

/// Pixel `(col, row)` has its centre at `Point { x: col, y: row }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }
}

const EPS: f64 = 1e-9;

/// Closed ring of vertices; the closing edge is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct TextPolygon {
    vertices: Vec<Point>,
}

impl TextPolygon {
    /// Rejects rings with fewer than 3 vertices, zero area or crossing edges.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!("{} vertices, need at least 3", vertices.len())));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let p = TextPolygon { vertices };
        if p.area() <= EPS {
            return Err(Error::InvalidPolygon("zero area".into()));
        }
        if p.self_intersects() {
            return Err(Error::InvalidPolygon("edges cross".into()));
        }
        Ok(p)
    }

    /// Contour rings may touch themselves along one-pixel necks.
    pub(crate) fn from_contour(vertices: Vec<Point>) -> Self {
        TextPolygon { vertices }
    }

    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self> {
        Self::new(coords.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    /// Axis-aligned rectangle with corners `(x0, y0)` and `(x1, y1)`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::from_xy(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    /// Shoelace area; positive when vertices run clockwise on screen
    /// (counter-clockwise in a y-up frame).
    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    fn self_intersects(&self) -> bool {
        let n = self.vertices.len();
        let edges: Vec<(Point, Point)> = self.edges().collect();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // adjacent edges may only share their common vertex
                    let (a, b) = edges[i];
                    let (c, d) = edges[j];
                    if b.sub(a).cross(d.sub(c)).abs() < EPS && b.sub(a).dot(d.sub(c)) < 0.0 {
                        return true;
                    }
                    continue;
                }
                if segments_touch(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return true;
                }
            }
        }
        false
    }

    /// Inside or on the boundary.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if point_on_segment(p, a, b) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Integer-aligned pixel bounds `(x0, y0, x1, y1)` of the pixel centres
    /// that can be inside, inclusive.
    pub fn pixel_bounds(&self) -> (i64, i64, i64, i64) {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        (
            (x0 - EPS).ceil() as i64,
            (y0 - EPS).ceil() as i64,
            (x1 + EPS).floor() as i64,
            (y1 + EPS).floor() as i64,
        )
    }

    /// Pixels whose centre lies inside or on the ring, as `(col, row)`.
    pub fn pixels(&self) -> Vec<(i64, i64)> {
        let (x0, y0, x1, y1) = self.pixel_bounds();
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(Point::new(x as f64, y as f64)) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Sets every in-bounds pixel whose centre lies inside or on the ring.
    pub fn rasterize_into(&self, map: &mut BinaryMap) {
        let (w, h) = (map.width() as i64, map.height() as i64);
        let (x0, y0, x1, y1) = self.pixel_bounds();
        for y in y0.max(0)..=y1.min(h - 1) {
            for x in x0.max(0)..=x1.min(w - 1) {
                if self.contains(Point::new(x as f64, y as f64)) {
                    map.set(x as usize, y as usize, true);
                }
            }
        }
    }

    pub fn rasterize(&self, width: usize, height: usize) -> BinaryMap {
        let mut m = BinaryMap::zeros(width, height);
        self.rasterize_into(&mut m);
        m
    }
}

pub(crate) fn point_on_segment(p: Point, a: Point, b: Point) -> bool {
    let ab = b.sub(a);
    let ap = p.sub(a);
    let len = ab.norm();
    if len < EPS {
        return p.dist(a) < EPS;
    }
    if (ab.cross(ap) / len).abs() > EPS {
        return false;
    }
    let t = ab.dot(ap) / (len * len);
    (-EPS..=1.0 + EPS).contains(&t)
}

/// True when the closed segments `ab` and `cd` share at least one point.
pub(crate) fn segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = b.sub(a).cross(c.sub(a));
    let d2 = b.sub(a).cross(d.sub(a));
    let d3 = d.sub(c).cross(a.sub(c));
    let d4 = d.sub(c).cross(b.sub(c));
    if ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS)) && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS)) {
        return true;
    }
    point_on_segment(c, a, b) || point_on_segment(d, a, b) || point_on_segment(a, c, d) || point_on_segment(b, c, d)
}

/// Inward offset by `d = A (1 - r^2) / L` with `r = 1 - ratio`.
///
/// Each edge moves inward by `d`; new vertices are the intersections of
/// consecutive offset lines. Returns `None` when the offset ring collapses:
/// an edge flips direction, the area vanishes or the ring crosses itself.
pub fn shrink_polygon(p: &TextPolygon, ratio: f64) -> Result<Option<TextPolygon>> {
    if !(ratio > 0.0 && ratio <= 0.5) {
        return Err(Error::InvalidConfig(format!("shrink ratio {ratio} outside (0, 0.5]")));
    }
    let r = 1.0 - ratio;
    let d = p.area() * (1.0 - r * r) / p.perimeter();
    Ok(offset_inward(p, d))
}

pub(crate) fn offset_inward(p: &TextPolygon, d: f64) -> Option<TextPolygon> {
    let v = p.vertices();
    let n = v.len();
    // inward normal is the edge direction rotated towards the interior
    let orient = p.signed_area().signum();
    let lines: Vec<(Point, Point)> = p
        .edges()
        .map(|(a, b)| {
            let dir = b.sub(a).scale(1.0 / a.dist(b));
            let normal = Point::new(-dir.y, dir.x).scale(orient);
            (a.add(normal.scale(d)), dir)
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (p0, d0) = lines[(k + n - 1) % n];
        let (p1, d1) = lines[k];
        let den = d0.cross(d1);
        if den.abs() < 1e-12 {
            // collinear neighbours: the shared vertex just moves along the normal
            out.push(p1);
            continue;
        }
        let t = p1.sub(p0).cross(d1) / den;
        out.push(p0.add(d0.scale(t)));
    }
    for k in 0..n {
        let a = v[k].sub(v[(k + 1) % n]);
        let b = out[k].sub(out[(k + 1) % n]);
        if a.dot(b) <= 0.0 {
            return None;
        }
    }
    let q = TextPolygon::new(out).ok()?;
    (q.signed_area().signum() == orient && q.area() < p.area()).then_some(q)
}

/// One polygon per non-blank line: `x1,y1,...,xn,yn` integer coordinates.
pub fn parse_annotations(text: &str) -> Result<Vec<TextPolygon>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: String| Error::AnnotationFormat(format!("line {}: {what}", lineno + 1));
        let nums = line
            .split(',')
            .map(|f| f.trim().parse::<i64>().map_err(|_| bad(format!("{f:?} is not an integer"))))
            .collect::<Result<Vec<_>>>()?;
        if nums.len() % 2 != 0 {
            return Err(bad(format!("{} coordinates, expected x,y pairs", nums.len())));
        }
        let pts = nums.chunks(2).map(|c| Point::new(c[0] as f64, c[1] as f64)).collect();
        out.push(TextPolygon::new(pts).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

/// Inverse of [`parse_annotations`]; coordinates are rounded to integers.
pub fn format_annotations(polys: &[TextPolygon]) -> String {
    let mut s = String::new();
    for p in polys {
        let fields: Vec<String> = p
            .vertices()
            .iter()
            .flat_map(|v| [v.x.round() as i64, v.y.round() as i64])
            .map(|c| c.to_string())
            .collect();
        writeln!(s, "{}", fields.join(",")).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validation() {
        assert!(TextPolygon::from_xy(&[(0.0, 0.0), (1.0, 0.0)]).is_err());
        assert!(TextPolygon::from_xy(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]).is_err());
        // bow tie
        assert!(TextPolygon::from_xy(&[(0.0, 0.0), (4.0, 4.0), (4.0, 0.0), (0.0, 4.0)]).is_err());
        assert!(TextPolygon::rect(0.0, 0.0, 3.0, 2.0).is_ok());
    }

    #[test]
    fn rectangle_shrinks_by_closed_form_offset() {
        let rect = TextPolygon::rect(0.0, 0.0, 100.0, 20.0).unwrap();
        let s = shrink_polygon(&rect, 0.2).unwrap().unwrap();
        let expected = [(3.0, 3.0), (97.0, 3.0), (97.0, 17.0), (3.0, 17.0)];
        for (v, e) in s.vertices().iter().zip(expected) {
            assert!((v.x - e.0).abs() < 1e-9 && (v.y - e.1).abs() < 1e-9, "{v:?} vs {e:?}");
        }
        assert!((s.area() - 94.0 * 14.0).abs() < 1e-6);
    }

    #[test]
    fn tiny_ratio_leaves_polygon_in_place() {
        let p = TextPolygon::from_xy(&[(0.0, 0.0), (10.0, 1.0), (12.0, 8.0), (1.0, 9.0)]).unwrap();
        let s = shrink_polygon(&p, 1e-9).unwrap().unwrap();
        for (a, b) in p.vertices().iter().zip(s.vertices()) {
            assert!(a.dist(*b) < 1e-6);
        }
    }

    #[test]
    fn thin_spike_collapses() {
        // a 1-pixel spike on a 20x20 body; the offset (~1.48) exceeds its half width
        let p = TextPolygon::from_xy(&[
            (0.0, 0.0),
            (20.0, 0.0),
            (20.0, 10.0),
            (30.0, 10.0),
            (30.0, 11.0),
            (20.0, 11.0),
            (20.0, 20.0),
            (0.0, 20.0),
        ])
        .unwrap();
        assert!(shrink_polygon(&p, 0.2).unwrap().is_none());
        assert!(shrink_polygon(&p, 0.7).is_err());
    }

    #[test]
    fn containment_is_boundary_inclusive() {
        let r = TextPolygon::rect(1.0, 1.0, 3.0, 2.0).unwrap();
        assert!(r.contains(Point::new(1.0, 1.0)));
        assert!(r.contains(Point::new(2.0, 1.5)));
        assert!(!r.contains(Point::new(3.5, 1.5)));
        assert_eq!(r.rasterize(5, 5).count_ones(), 6);
    }

    #[test]
    fn annotation_round_trip_and_errors() {
        let text = "0,0,10,0,10,5,0,5\n\n2,2,8,2,5,7\n";
        let polys = parse_annotations(text).unwrap();
        assert_eq!(polys.len(), 2);
        assert_eq!(format_annotations(&polys), "0,0,10,0,10,5,0,5\n2,2,8,2,5,7\n");
        assert!(matches!(parse_annotations("1,2,3"), Err(Error::AnnotationFormat(_))));
        assert!(matches!(parse_annotations("1,2,x,4,5,6"), Err(Error::AnnotationFormat(_))));
        assert!(matches!(parse_annotations("0,0,1,1"), Err(Error::AnnotationFormat(_))));
    }

    proptest! {
        #[test]
        fn shrink_stays_inside_and_loses_area(
            x0 in 0.0f64..50.0, y0 in 0.0f64..50.0, w in 4.0f64..80.0, h in 4.0f64..30.0,
            skew in -2.0f64..2.0, ratio in 0.01f64..0.5,
        ) {
            let p = TextPolygon::from_xy(&[
                (x0, y0), (x0 + w, y0 + skew), (x0 + w + skew, y0 + h), (x0 - skew, y0 + h),
            ]).unwrap();
            if let Some(s) = shrink_polygon(&p, ratio).unwrap() {
                prop_assert!(s.area() < p.area());
                for v in s.vertices() {
                    prop_assert!(p.contains(*v));
                }
            }
        }
    }
}
