//! Synthetic text-centre maps: stacked sinusoidal strips, column gaps cut
//! out of the strips and small noise blobs kept away from the text.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{build_tc_th_ta, fold_angle, shrink_polygon, Point, TextPolygon, SHRINK_RATIO};
use crate::map::{BinaryMap, FeatureMap};

/// Vertices per long side of a generated polygon.
pub const SIDE_VERTICES: usize = 7;
/// Smallest allowed Chebyshev distance between noise and text pixels.
pub const MIN_NOISE_CLEARANCE: usize = 3;
const MARGIN: usize = 2;
const PLACEMENT_TRIES: usize = 64;

/// Inclusive `(min, max)` range.
pub type Span<T> = (T, T);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub instances: Span<usize>,
    /// Text height in pixels.
    pub thickness: Span<usize>,
    /// Angular frequency of the centre line, radians per pixel.
    pub curvature: Span<f64>,
    /// Centre-line amplitude in pixels.
    pub amplitude: Span<f64>,
    /// Vertical clearance between stacked instances.
    pub spacing: Span<usize>,
    pub noise_blobs: Span<usize>,
    /// Side of a square noise blob.
    pub blob_size: Span<usize>,
    /// Chebyshev distance kept between noise and text pixels.
    pub noise_clearance: usize,
    pub gaps: Span<usize>,
    /// Columns removed per gap.
    pub gap_width: Span<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 64,
            height: 64,
            instances: (2, 4),
            thickness: (4, 10),
            curvature: (0.02, 0.08),
            amplitude: (0.0, 2.0),
            spacing: (3, 12),
            noise_blobs: (2, 6),
            blob_size: (1, 3),
            noise_clearance: MIN_NOISE_CLEARANCE,
            gaps: (0, 2),
            gap_width: (1, 4),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// The benchmark corpus: taller maps so stacked lines stay apart under
    /// closing, text at least 5 px so the flat opening keeps every centre
    /// band, and gaps wide enough to survive segment rasterization.
    pub fn standard() -> Self {
        SynthConfig {
            height: 96,
            thickness: (5, 10),
            spacing: (10, 20),
            noise_blobs: (1, 4),
            gap_width: (3, 8),
            seed: 1,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn span<T: PartialOrd + std::fmt::Debug>(name: &str, s: &Span<T>) -> Result<()> {
            if s.0 > s.1 {
                return Err(Error::InvalidConfig(format!("{name} range {s:?} is empty")));
            }
            Ok(())
        }
        span("instances", &self.instances)?;
        span("thickness", &self.thickness)?;
        span("curvature", &self.curvature)?;
        span("amplitude", &self.amplitude)?;
        span("spacing", &self.spacing)?;
        span("noise_blobs", &self.noise_blobs)?;
        span("blob_size", &self.blob_size)?;
        span("gaps", &self.gaps)?;
        span("gap_width", &self.gap_width)?;
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidConfig("maps must be at least 16x16".into()));
        }
        if self.instances.0 == 0 || self.thickness.0 < 2 || self.blob_size.0 == 0 || self.gap_width.0 == 0 {
            return Err(Error::InvalidConfig(
                "instances, blob size and gap width start at 1; thickness at 2".into(),
            ));
        }
        if self.noise_clearance < MIN_NOISE_CLEARANCE {
            return Err(Error::InvalidConfig(format!("noise clearance must be at least {MIN_NOISE_CLEARANCE}")));
        }
        if self.amplitude.0 < 0.0 || self.curvature.0 < 0.0 {
            return Err(Error::InvalidConfig("amplitude and curvature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    /// Corrupted text-centre probabilities (1 channel).
    pub tc: FeatureMap,
    /// Clean text-centre mask.
    pub clean: BinaryMap,
    /// Text height per pixel; noise pixels carry a plausible random height.
    pub th: FeatureMap,
    /// Segment angle per pixel.
    pub ta: FeatureMap,
    pub polygons: Vec<TextPolygon>,
    pub gap_pixels: usize,
    pub noise_pixels: usize,
}

impl SynthSample {
    pub fn width(&self) -> usize {
        self.tc.width()
    }

    pub fn height(&self) -> usize {
        self.tc.height()
    }

    /// Full text-region mask of the ground-truth polygons.
    pub fn text_region(&self) -> BinaryMap {
        let mut m = BinaryMap::zeros(self.width(), self.height());
        for p in &self.polygons {
            p.rasterize_into(&mut m);
        }
        m
    }

    pub fn corrupted_mask(&self) -> BinaryMap {
        BinaryMap::from_fn(self.width(), self.height(), |x, y| self.tc.get(0, x, y) > 0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub samples: Vec<SynthSample>,
    /// Attempts abandoned because placement failed.
    pub skipped: usize,
}

/// `count` samples from `cfg`; attempt `k` draws from stream `k` of the
/// seed, so the corpus depends only on `cfg` and `count`.
pub fn generate(cfg: &SynthConfig, count: usize) -> Result<Corpus> {
    cfg.validate()?;
    let mut samples = Vec::with_capacity(count);
    let mut skipped = 0;
    let max_attempts = 4 * count + 16;
    let mut attempt = 0u64;
    while samples.len() < count {
        if attempt as usize >= max_attempts {
            return Err(Error::InvalidConfig(format!(
                "only {} of {count} samples could be placed after {attempt} attempts",
                samples.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(attempt);
        attempt += 1;
        match generate_one(cfg, &mut rng)? {
            Some(s) => samples.push(s),
            None => skipped += 1,
        }
    }
    Ok(Corpus { samples, skipped })
}

struct Strip {
    polygon: TextPolygon,
    x0: usize,
    x1: usize,
}

fn place_strips(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Option<Vec<Strip>> {
    let n = rng.gen_range(cfg.instances.0..=cfg.instances.1);
    let mut strips = Vec::with_capacity(n);
    let mut top = MARGIN as f64;
    for k in 0..n {
        let t = rng.gen_range(cfg.thickness.0..=cfg.thickness.1) as f64;
        let a = rng.gen_range(cfg.amplitude.0..=cfg.amplitude.1);
        let omega = rng.gen_range(cfg.curvature.0..=cfg.curvature.1);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        if k > 0 {
            top += rng.gen_range(cfg.spacing.0..=cfg.spacing.1) as f64;
        }
        let yc = top + a + t / 2.0;
        let bottom = top + 2.0 * a + t;
        if bottom > (cfg.height - 1 - MARGIN) as f64 {
            break;
        }
        top = bottom + 1.0;
        let x0 = rng.gen_range(MARGIN..=MARGIN + cfg.width / 8);
        let x1 = rng.gen_range(cfg.width - 1 - MARGIN - cfg.width / 8..=cfg.width - 1 - MARGIN);
        let centre = |x: f64| yc + a * (omega * x + phase).sin();
        let xs: Vec<f64> = (0..SIDE_VERTICES)
            .map(|i| (x0 as f64 + (x1 - x0) as f64 * i as f64 / (SIDE_VERTICES - 1) as f64).round())
            .collect();
        let mut ring: Vec<Point> = xs.iter().map(|&x| Point::new(x, (centre(x) - t / 2.0).round())).collect();
        ring.extend(xs.iter().rev().map(|&x| Point::new(x, (centre(x) + t / 2.0).round())));
        let polygon = TextPolygon::new(ring).ok()?;
        strips.push(Strip { polygon, x0, x1 });
    }
    (strips.len() >= cfg.instances.0).then_some(strips)
}

fn generate_one(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Option<SynthSample>> {
    let (w, h) = (cfg.width, cfg.height);
    let Some(strips) = place_strips(cfg, rng) else {
        return Ok(None);
    };
    let polygons: Vec<TextPolygon> = strips.iter().map(|s| s.polygon.clone()).collect();
    let geo = build_tc_th_ta(&polygons, w, h)?;
    let clean = geo.tc_mask();
    let region = geo.tr_mask();
    let mut th = geo.th.clone();
    let mut ta = geo.ta.clone();

    // per-instance text centre, for centredness and gap cutting
    let mut owner: Vec<Option<usize>> = vec![None; w * h];
    for (i, s) in strips.iter().enumerate() {
        if let Some(shrunk) = shrink_polygon(&s.polygon, SHRINK_RATIO)? {
            let m = shrunk.rasterize(w, h);
            for y in 0..h {
                for x in 0..w {
                    if m.get(x, y) && clean.get(x, y) {
                        owner[y * w + x] = Some(i);
                    }
                }
            }
        }
    }
    let mut tc = FeatureMap::zeros(1, w, h);
    for x in 0..w {
        for i in 0..strips.len() {
            let rows: Vec<usize> = (0..h).filter(|&y| owner[y * w + x] == Some(i)).collect();
            let (Some(&lo), Some(&hi)) = (rows.first(), rows.last()) else {
                continue;
            };
            let mid = (lo + hi) as f64 / 2.0;
            let half = (hi - lo) as f64 / 2.0 + 1.0;
            for y in rows {
                let centred = 1.0 - (y as f64 - mid).abs() / half;
                tc.set(0, x, y, 0.9 + 0.1 * centred);
            }
        }
    }

    // gaps: whole columns of one instance's text centre
    let mut gap_pixels = 0;
    let mut cut: Vec<(usize, usize, usize)> = Vec::new();
    let gaps = rng.gen_range(cfg.gaps.0..=cfg.gaps.1);
    for _ in 0..gaps {
        let mut placed = false;
        for _ in 0..PLACEMENT_TRIES {
            let i = rng.gen_range(0..strips.len());
            let g = rng.gen_range(cfg.gap_width.0..=cfg.gap_width.1);
            let (x0, x1) = (strips[i].x0, strips[i].x1);
            let quarter = (x1 - x0) / 4;
            if x1 - x0 < 2 * quarter + g + 1 {
                continue;
            }
            let gx = rng.gen_range(x0 + quarter..=x1 - quarter - g);
            // keep gaps on one strip at least 4 columns apart
            if cut.iter().any(|&(j, a, b)| j == i && gx < b + 4 && a < gx + g + 4) {
                continue;
            }
            cut.push((i, gx, gx + g));
            for x in gx..gx + g {
                for y in 0..h {
                    if owner[y * w + x] == Some(i) && tc.get(0, x, y) > 0.0 {
                        // geometry stays: only the centre evidence is lost
                        tc.set(0, x, y, 0.0);
                        gap_pixels += 1;
                    }
                }
            }
            placed = true;
            break;
        }
        if !placed {
            return Ok(None);
        }
    }

    // noise: square blobs clear of text and of each other
    let mut noise = BinaryMap::zeros(w, h);
    let mut noise_pixels = 0;
    let blobs = rng.gen_range(cfg.noise_blobs.0..=cfg.noise_blobs.1);
    for _ in 0..blobs {
        let mut placed = false;
        for _ in 0..PLACEMENT_TRIES {
            let s = rng.gen_range(cfg.blob_size.0..=cfg.blob_size.1);
            if s > w || s > h {
                break;
            }
            let bx = rng.gen_range(0..=w - s);
            let by = rng.gen_range(0..=h - s);
            if !clear_of(&region, bx, by, s, cfg.noise_clearance) || !clear_of(&noise, bx, by, s, 2) {
                continue;
            }
            let height = rng.gen_range(cfg.thickness.0 as f64..=cfg.thickness.1 as f64);
            for y in by..by + s {
                for x in bx..bx + s {
                    noise.set(x, y, true);
                    tc.set(0, x, y, 0.9 + 0.1 * rng.gen::<f64>());
                    th.set(0, x, y, height);
                    ta.set(0, x, y, fold_angle(-FRAC_PI_2 + rng.gen_range(-0.1..0.1)));
                    noise_pixels += 1;
                }
            }
            placed = true;
            break;
        }
        if !placed {
            return Ok(None);
        }
    }

    Ok(Some(SynthSample {
        tc,
        clean,
        th,
        ta,
        polygons,
        gap_pixels,
        noise_pixels,
    }))
}

/// No set pixel of `m` within Chebyshev distance `< dist` of the `s x s`
/// square at `(bx, by)`.
fn clear_of(m: &BinaryMap, bx: usize, by: usize, s: usize, dist: usize) -> bool {
    let r = dist - 1;
    let xa = bx.saturating_sub(r);
    let ya = by.saturating_sub(r);
    let xb = (bx + s - 1 + r).min(m.width() - 1);
    let yb = (by + s - 1 + r).min(m.height() - 1);
    (ya..=yb).all(|y| (xa..=xb).all(|x| !m.get(x, y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SynthConfig {
        SynthConfig {
            noise_blobs: (0, 0),
            gaps: (0, 0),
            ..SynthConfig::default()
        }
    }

    #[test]
    fn without_noise_or_gaps_corrupted_equals_clean() {
        let c = generate(&quiet(), 5).unwrap();
        for s in &c.samples {
            assert_eq!(s.corrupted_mask(), s.clean);
            assert!(s.clean.count_ones() > 0);
        }
    }

    #[test]
    fn one_gap_of_width_two_removes_two_columns() {
        let cfg = SynthConfig {
            gaps: (1, 1),
            gap_width: (2, 2),
            noise_blobs: (0, 0),
            ..SynthConfig::default()
        };
        let c = generate(&cfg, 6).unwrap();
        for s in &c.samples {
            let diff = s.clean.count_ones() - s.corrupted_mask().count_ones();
            assert_eq!(diff, s.gap_pixels);
            // two columns, each as tall as the strip's text centre there
            let cols: Vec<usize> = (0..s.width())
                .filter(|&x| (0..s.height()).any(|y| s.clean.get(x, y) && !s.corrupted_mask().get(x, y)))
                .collect();
            assert_eq!(cols.len(), 2);
            assert_eq!(cols[1], cols[0] + 1);
        }
    }

    #[test]
    fn pixel_accounting_is_exact() {
        let c = generate(&SynthConfig::default(), 20).unwrap();
        for s in &c.samples {
            assert_eq!(
                s.corrupted_mask().count_ones(),
                s.clean.count_ones() - s.gap_pixels + s.noise_pixels
            );
        }
    }

    #[test]
    fn noise_stays_clear_of_text() {
        let c = generate(&SynthConfig::default(), 20).unwrap();
        for s in &c.samples {
            let region = s.text_region();
            let noisy = s.corrupted_mask();
            for y in 0..s.height() {
                for x in 0..s.width() {
                    if noisy.get(x, y) && !s.clean.get(x, y) {
                        assert!(clear_of(&region, x, y, 1, MIN_NOISE_CLEARANCE));
                    }
                }
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig {
            seed: 42,
            ..SynthConfig::default()
        };
        assert_eq!(generate(&cfg, 4).unwrap(), generate(&cfg, 4).unwrap());
        let other = SynthConfig { seed: 43, ..cfg };
        assert_ne!(generate(&other, 4).unwrap().samples, generate(&SynthConfig { seed: 42, ..other.clone() }, 4).unwrap().samples);
    }

    #[test]
    fn empty_ranges_are_rejected() {
        let cfg = SynthConfig {
            gap_width: (4, 1),
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&cfg, 1), Err(Error::InvalidConfig(_))));
    }
}
