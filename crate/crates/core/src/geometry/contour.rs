use crate::map::BinaryMap;

use super::polygon::{Point, TextPolygon};

pub const MIN_REGION_AREA: usize = 16;

/// Clockwise on screen (y down), starting east.
const DIRS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// 8-connected components in scan order, each as a list of `(x, y)` pixels
/// with the scan-first pixel at index 0.
pub fn components(m: &BinaryMap) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (m.width(), m.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            if !m.get(x0, y0) || seen[y0 * w + x0] {
                continue;
            }
            seen[y0 * w + x0] = true;
            let mut comp = vec![(x0, y0)];
            let mut head = 0;
            while head < comp.len() {
                let (x, y) = comp[head];
                head += 1;
                for (dx, dy) in DIRS {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if m.get(nx, ny) && !seen[ny * w + nx] {
                        seen[ny * w + nx] = true;
                        comp.push((nx, ny));
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

/// Moore-neighbour trace of the outer boundary through pixel centres,
/// starting at the component's scan-first pixel.
fn trace_outer(m: &BinaryMap, start: (usize, usize), max_steps: usize) -> Vec<(i64, i64)> {
    let fg = |p: (i64, i64)| p.0 >= 0 && p.1 >= 0 && (p.0 as usize) < m.width() && (p.1 as usize) < m.height() && m.get(p.0 as usize, p.1 as usize);
    let s = (start.0 as i64, start.1 as i64);
    let b0 = (s.0 - 1, s.1);
    let (mut c, mut b) = (s, b0);
    let mut ring = vec![s];
    for _ in 0..max_steps {
        let k0 = DIRS.iter().position(|&d| (c.0 + d.0, c.1 + d.1) == b).unwrap();
        let mut next = None;
        for i in 1..=8 {
            let d = DIRS[(k0 + i) % 8];
            let q = (c.0 + d.0, c.1 + d.1);
            if fg(q) {
                let pd = DIRS[(k0 + i - 1) % 8];
                next = Some((q, (c.0 + pd.0, c.1 + pd.1)));
                break;
            }
        }
        let Some((q, nb)) = next else {
            break;
        };
        c = q;
        b = nb;
        // the start may be passed more than once on a figure-eight boundary
        if c == s && b == b0 {
            break;
        }
        ring.push(c);
    }
    while ring.len() > 1 && ring.last() == ring.first() {
        ring.pop();
    }
    ring
}

/// Drops vertices where the boundary runs straight through.
fn simplify(ring: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    let n = ring.len();
    if n < 3 {
        return ring;
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let p = ring[(k + n - 1) % n];
        let c = ring[k];
        let q = ring[(k + 1) % n];
        let straight = (c.0 - p.0, c.1 - p.1) == (q.0 - c.0, q.1 - c.1);
        if !straight {
            out.push(c);
        }
    }
    if out.is_empty() {
        ring
    } else {
        out
    }
}

/// One outer-contour polygon per 8-connected component with at least
/// `min_area` pixels. Holes are not traced, so rasterizing a result covers
/// the component with its holes filled.
pub fn extract_regions(m: &BinaryMap, min_area: usize) -> Vec<TextPolygon> {
    components(m)
        .into_iter()
        .filter(|c| c.len() >= min_area.max(1))
        .map(|c| {
            let ring = simplify(trace_outer(m, c[0], 4 * c.len() + 8));
            TextPolygon::from_contour(ring.into_iter().map(|(x, y)| Point::new(x as f64, y as f64)).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&str]) -> BinaryMap {
        BinaryMap::from_fn(rows[0].len(), rows.len(), |x, y| rows[y].as_bytes()[x] == b'#')
    }

    fn covered(p: &TextPolygon, w: usize, h: usize) -> BinaryMap {
        p.rasterize(w, h)
    }

    #[test]
    fn filled_rectangle_gives_four_corners() {
        let m = BinaryMap::from_fn(12, 10, |x, y| (2..9).contains(&x) && (3..7).contains(&y));
        let regions = extract_regions(&m, MIN_REGION_AREA);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].len(), 4);
        assert_eq!(covered(&regions[0], 12, 10), m);
    }

    #[test]
    fn two_blobs_two_polygons_small_dropped() {
        let m = from_rows(&[
            "#####.......#####",
            "#####.......#####",
            "#####.......#####",
            "#####.......#####",
            ".................",
            "........#........",
        ]);
        let regions = extract_regions(&m, MIN_REGION_AREA);
        assert_eq!(regions.len(), 2);
        assert_eq!(extract_regions(&m, 1).len(), 3);
    }

    #[test]
    fn donut_gives_single_outer_contour() {
        let m = from_rows(&[
            "........", //
            ".######.", //
            ".#....#.", //
            ".#....#.", //
            ".######.", //
            "........", //
        ]);
        let regions = extract_regions(&m, 4);
        assert_eq!(regions.len(), 1);
        let filled = covered(&regions[0], 8, 6);
        assert_eq!(filled.count_ones(), 24);
        assert!(filled.get(3, 2));
    }

    #[test]
    fn diagonal_and_irregular_shapes_are_recovered() {
        let m = from_rows(&[
            "..........",
            ".##.......",
            ".###......",
            "..###.....",
            "...####...",
            "....#.##..",
            "......##..",
            "..........",
        ]);
        let regions = extract_regions(&m, 1);
        assert_eq!(regions.len(), 1);
        let filled = covered(&regions[0], 10, 8);
        for y in 0..8 {
            for x in 0..10 {
                if m.get(x, y) {
                    assert!(filled.get(x, y), "pixel ({x}, {y}) lost");
                }
            }
        }
    }
}
