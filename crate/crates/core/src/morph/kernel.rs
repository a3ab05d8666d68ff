//! Sliding max/min kernels with non-flat additive structuring elements.
//!
//! For an `M x N` element the window of output pixel `(x, y)` is
//! `{(x + i, y + j) : 0 <= i < M, 0 <= j < N}`. Positions that fall outside
//! the map are left out of the max/min rather than padded. Offsets are scanned
//! with `i` outer and `j` inner; the first offset reaching the extremum wins.

use crate::error::{Error, Result};
use crate::map::FeatureMap;

use super::se::StructElem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MorphKind {
    Dilation,
    Erosion,
}

impl MorphKind {
    /// Derivative of one candidate term with respect to its SE weight.
    pub fn se_sign(self) -> f64 {
        match self {
            MorphKind::Dilation => 1.0,
            MorphKind::Erosion => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MorphKind::Dilation => "dilation",
            MorphKind::Erosion => "erosion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dilation" => Some(MorphKind::Dilation),
            "erosion" => Some(MorphKind::Erosion),
            _ => None,
        }
    }
}

/// Half-open rectangle `[x0, x1) x [y0, y1)` of pixels that exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn full(width: usize, height: usize) -> Self {
        Region {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    /// Pixels whose `m x n` window reaches into `self`.
    pub fn grown(self, m: usize, n: usize) -> Self {
        Region {
            x0: self.x0.saturating_sub(m - 1),
            y0: self.y0.saturating_sub(n - 1),
            x1: self.x1,
            y1: self.y1,
        }
    }
}

/// Winning window offset per output pixel, recorded by a forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgCache {
    pub(crate) shape: (usize, usize, usize),
    pub(crate) se_shape: (usize, usize),
    pub(crate) input_region: Region,
    pub(crate) output_region: Region,
    /// Offset index `i * N + j` per output pixel, in map storage order.
    pub(crate) winners: Vec<u16>,
}

impl ArgCache {
    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn winners(&self) -> &[u16] {
        &self.winners
    }

    /// Winning `(i, j)` offset at output pixel `(c, x, y)`.
    pub fn winner(&self, c: usize, x: usize, y: usize) -> (usize, usize) {
        let (_, w, h) = self.shape;
        let k = self.winners[(c * h + y) * w + x] as usize;
        (k / self.se_shape.1, k % self.se_shape.1)
    }
}

pub(crate) fn check_compatible(input: &FeatureMap, se: &StructElem) -> Result<()> {
    if input.channels() != se.channels() {
        return Err(Error::shape(
            format!("{} channel(s) to match the structuring element", se.channels()),
            format!("{} channel(s)", input.channels()),
        ));
    }
    if se.m() > input.width() || se.n() > input.height() {
        return Err(Error::WindowTooLarge {
            m: se.m(),
            n: se.n(),
            width: input.width(),
            height: input.height(),
        });
    }
    Ok(())
}

/// Forward pass returning the output map and the winner cache.
pub fn apply(kind: MorphKind, input: &FeatureMap, se: &StructElem) -> Result<(FeatureMap, ArgCache)> {
    check_compatible(input, se)?;
    apply_in_region(kind, input, Region::full(input.width(), input.height()), se)
}

/// Forward pass where only pixels inside `valid` exist.
///
/// Output is produced on `valid.grown(M, N)`; everything else in the returned
/// map is zero and must not be read.
pub(crate) fn apply_in_region(
    kind: MorphKind,
    input: &FeatureMap,
    valid: Region,
    se: &StructElem,
) -> Result<(FeatureMap, ArgCache)> {
    let (channels, width, height) = input.shape();
    let (m, n) = (se.m(), se.n());
    let out_region = valid.grown(m, n);
    let src = input.data();
    let weights = se.weights();
    let mut out = vec![0.0; src.len()];
    let mut winners = vec![0u16; src.len()];
    let plane = width * height;

    for c in 0..channels {
        let base = c * plane;
        let wbase = c * m * n;
        for y in out_region.y0..out_region.y1 {
            let jlo = valid.y0.saturating_sub(y);
            let jhi = n.min(valid.y1 - y);
            for x in out_region.x0..out_region.x1 {
                let ilo = valid.x0.saturating_sub(x);
                let ihi = m.min(valid.x1 - x);
                let mut best = 0.0;
                let mut best_k = 0usize;
                let mut first = true;
                for i in ilo..ihi {
                    for j in jlo..jhi {
                        let v = src[base + (y + j) * width + x + i];
                        let s = weights[wbase + i * n + j];
                        let cand = match kind {
                            MorphKind::Dilation => v + s,
                            MorphKind::Erosion => v - s,
                        };
                        let better = first
                            || match kind {
                                MorphKind::Dilation => cand > best,
                                MorphKind::Erosion => cand < best,
                            };
                        if better {
                            best = cand;
                            best_k = i * n + j;
                            first = false;
                        }
                    }
                }
                let o = base + y * width + x;
                out[o] = best;
                winners[o] = best_k as u16;
            }
        }
    }

    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{} output", kind.as_str())));
    }
    let out = FeatureMap::from_vec(channels, width, height, out)?;
    Ok((
        out,
        ArgCache {
            shape: (channels, width, height),
            se_shape: (m, n),
            input_region: valid,
            output_region: out_region,
            winners,
        },
    ))
}

/// Routes `upstream` through the cached winners.
///
/// Returns the gradient with respect to the layer input and adds the SE
/// gradient into `se_grad` (laid out like [`StructElem::weights`]).
pub fn route_backward(
    kind: MorphKind,
    cache: &ArgCache,
    upstream: &FeatureMap,
    se_grad: &mut [f64],
) -> Result<FeatureMap> {
    if upstream.shape() != cache.shape {
        return Err(Error::StaleCache(format!(
            "cache recorded {:?}, upstream gradient is {:?}",
            cache.shape,
            upstream.shape()
        )));
    }
    let (channels, width, height) = cache.shape;
    let (m, n) = cache.se_shape;
    if se_grad.len() != channels * m * n {
        return Err(Error::shape(channels * m * n, se_grad.len()));
    }
    let sign = kind.se_sign();
    let g = upstream.data();
    let mut grad_in = vec![0.0; g.len()];
    let plane = width * height;
    let r = cache.output_region;
    for c in 0..channels {
        let base = c * plane;
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                let o = base + y * width + x;
                let k = cache.winners[o] as usize;
                let (i, j) = (k / n, k % n);
                grad_in[base + (y + j) * width + x + i] += g[o];
                se_grad[c * m * n + k] += sign * g[o];
            }
        }
    }
    FeatureMap::from_vec(channels, width, height, grad_in)
}

pub fn dilate(input: &FeatureMap, se: &StructElem) -> Result<FeatureMap> {
    apply(MorphKind::Dilation, input, se).map(|(out, _)| out)
}

pub fn erode(input: &FeatureMap, se: &StructElem) -> Result<FeatureMap> {
    apply(MorphKind::Erosion, input, se).map(|(out, _)| out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct transcription of the window formula, independent of `apply`.
    fn brute(kind: MorphKind, input: &FeatureMap, se: &StructElem) -> FeatureMap {
        let (c_n, w, h) = input.shape();
        FeatureMap::from_fn(c_n, w, h, |c, x, y| {
            let mut vals = Vec::new();
            for i in 0..se.m() {
                for j in 0..se.n() {
                    if x + i < w && y + j < h {
                        let v = input.get(c, x + i, y + j);
                        vals.push(match kind {
                            MorphKind::Dilation => v + se.weight(c, i, j),
                            MorphKind::Erosion => v - se.weight(c, i, j),
                        });
                    }
                }
            }
            match kind {
                MorphKind::Dilation => vals.into_iter().fold(f64::NEG_INFINITY, f64::max),
                MorphKind::Erosion => vals.into_iter().fold(f64::INFINITY, f64::min),
            }
        })
    }

    fn random_map(rng: &mut ChaCha8Rng, c: usize, w: usize, h: usize) -> FeatureMap {
        FeatureMap::from_fn(c, w, h, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_se(rng: &mut ChaCha8Rng, c: usize, m: usize, n: usize) -> StructElem {
        let mut se = StructElem::zeros(c, m, n);
        for v in se.weights_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        se
    }

    #[test]
    fn constant_map_zero_se() {
        let m = FeatureMap::filled(1, 5, 5, 5.0);
        let se = StructElem::zeros(1, 2, 2);
        assert_eq!(dilate(&m, &se).unwrap(), m);
        assert_eq!(erode(&m, &se).unwrap(), m);
    }

    #[test]
    fn unit_se_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_map(&mut rng, 2, 7, 4);
        let se = StructElem::zeros(2, 1, 1);
        assert_eq!(dilate(&m, &se).unwrap(), m);
        assert_eq!(erode(&m, &se).unwrap(), m);
    }

    #[test]
    fn dilate_matches_brute_force_2x2() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_map(&mut rng, 1, 5, 5);
        let se = random_se(&mut rng, 1, 2, 2);
        assert_eq!(dilate(&m, &se).unwrap(), brute(MorphKind::Dilation, &m, &se));
    }

    #[test]
    fn erode_matches_brute_force_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_map(&mut rng, 1, 5, 5);
        let se = random_se(&mut rng, 1, 3, 3);
        assert_eq!(erode(&m, &se).unwrap(), brute(MorphKind::Erosion, &m, &se));
    }

    #[test]
    fn erosion_is_dual_of_dilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_map(&mut rng, 2, 6, 5);
        let se = random_se(&mut rng, 2, 3, 2);
        let lhs = erode(&m, &se).unwrap();
        let rhs = dilate(&m.negate(), &se).unwrap().negate();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn rejects_channel_mismatch_and_oversized_window() {
        let m = FeatureMap::zeros(1, 3, 3);
        assert!(matches!(
            dilate(&m, &StructElem::zeros(2, 2, 2)),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            erode(&m, &StructElem::zeros(1, 4, 2)),
            Err(Error::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn ties_resolve_to_first_offset() {
        let m = FeatureMap::filled(1, 3, 3, 1.0);
        let (_, cache) = apply(MorphKind::Dilation, &m, &StructElem::zeros(1, 2, 2)).unwrap();
        assert!(cache.winners().iter().all(|&k| k == 0));
    }

    #[test]
    fn border_pixels_use_valid_positions_only() {
        // bottom-right pixel only sees itself
        let m = FeatureMap::from_fn(1, 3, 3, |_, x, y| (x + 3 * y) as f64);
        let out = erode(&m, &StructElem::zeros(1, 3, 3)).unwrap();
        assert_eq!(out.get(0, 2, 2), 8.0);
        assert_eq!(out.get(0, 1, 1), 4.0);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_map(&mut rng, 1, 6, 6);
        let se = random_se(&mut rng, 1, 2, 2);
        let (_, cache) = apply(MorphKind::Erosion, &m, &se).unwrap();
        let mut g = vec![0.0; 4];
        let gin = route_backward(MorphKind::Erosion, &cache, &FeatureMap::zeros(1, 6, 6), &mut g).unwrap();
        assert!(gin.data().iter().all(|&v| v == 0.0));
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn each_output_routes_to_exactly_one_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_map(&mut rng, 1, 5, 4);
        let se = random_se(&mut rng, 1, 3, 2);
        for kind in [MorphKind::Dilation, MorphKind::Erosion] {
            let (_, cache) = apply(kind, &m, &se).unwrap();
            for y in 0..4 {
                for x in 0..5 {
                    let mut up = FeatureMap::zeros(1, 5, 4);
                    up.set(0, x, y, 1.0);
                    let mut g = vec![0.0; 6];
                    route_backward(kind, &cache, &up, &mut g).unwrap();
                    let nonzero: Vec<f64> = g.iter().copied().filter(|&v| v != 0.0).collect();
                    assert_eq!(nonzero, vec![kind.se_sign()]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            seed in any::<u64>(),
            c in 1usize..4, w in 5usize..17, h in 5usize..17, m in 1usize..6, n in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let map = random_map(&mut rng, c, w, h);
            let se = random_se(&mut rng, c, m, n);
            for kind in [MorphKind::Dilation, MorphKind::Erosion] {
                let (out, _) = apply(kind, &map, &se).unwrap();
                prop_assert_eq!(out, brute(kind, &map, &se));
            }
        }

        #[test]
        fn zero_se_is_extensive_and_anti_extensive(seed in any::<u64>(), m in 1usize..5, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let map = random_map(&mut rng, 2, 8, 8);
            let se = StructElem::zeros(2, m, n);
            let d = dilate(&map, &se).unwrap();
            let e = erode(&map, &se).unwrap();
            for ((v, dv), ev) in map.data().iter().zip(d.data()).zip(e.data()) {
                prop_assert!(dv >= v && ev <= v);
            }
        }

        #[test]
        fn dilation_is_monotone(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lo = random_map(&mut rng, 1, 9, 7);
            let hi = lo.map(|v| v + rng.gen_range(0.0..0.3));
            let se = random_se(&mut rng, 1, 3, 3);
            let (dl, dh) = (dilate(&lo, &se).unwrap(), dilate(&hi, &se).unwrap());
            prop_assert!(dl.data().iter().zip(dh.data()).all(|(a, b)| a <= b));
        }

        #[test]
        fn interior_shift_equivariance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = random_map(&mut rng, 1, 12, 10);
            let shifted = FeatureMap::from_fn(1, 12, 10, |_, x, y| base.get(0, x.saturating_sub(1), y));
            let se = random_se(&mut rng, 1, 3, 2);
            let a = dilate(&base, &se).unwrap();
            let b = dilate(&shifted, &se).unwrap();
            // interior: windows stay inside both maps
            for y in 0..10 - 1 {
                for x in 1..12 - 3 {
                    prop_assert_eq!(b.get(0, x + 1, y), a.get(0, x, y));
                }
            }
        }
    }
}
