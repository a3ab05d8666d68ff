//! Class-balanced cross-entropies, smoothed L1 and the weighted objective.
//!
//! Classification losses accept either a 2-channel logit map (background,
//! text), read through a softmax, or a 1-channel map of text probabilities.
//! Probabilities are clipped to `[PROB_EPS, 1 - PROB_EPS]` before the log;
//! clipped pixels carry zero gradient.

use crate::error::{Error, Result};
use crate::map::{BinaryMap, FeatureMap};

pub const PROB_EPS: f64 = 1e-7;
pub const OHEM_NEG_RATIO: usize = 3;
/// Negatives kept by OHEM when a map has no positives.
pub const OHEM_EMPTY_NEGATIVES: usize = 100;
pub const TC_POS_WEIGHT: f64 = 0.75;
pub const DEFAULT_WEIGHTS: [f64; 5] = [1.0, 2.0, 1.0, 1.0, 1.0];

/// Per-pixel text probability and its derivative with respect to each
/// input channel.
struct Probs {
    p: Vec<f64>,
    /// `dp/d(channel 1)`; channel 0 (logits only) gets the negation.
    dp: Vec<f64>,
    logits: bool,
}

fn probs(pred: &FeatureMap, target: &BinaryMap) -> Result<Probs> {
    target.check_spatial(pred)?;
    let plane = pred.width() * pred.height();
    match pred.channels() {
        1 => {
            let p = pred.data().to_vec();
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidConfig("single-channel prediction must hold probabilities".into()));
            }
            Ok(Probs {
                p,
                dp: vec![1.0; plane],
                logits: false,
            })
        }
        2 => {
            let (z0, z1) = (pred.channel(0), pred.channel(1));
            let p: Vec<f64> = z0.iter().zip(z1).map(|(a, b)| sigmoid(b - a)).collect();
            let dp = p.iter().map(|p| p * (1.0 - p)).collect();
            Ok(Probs { p, dp, logits: true })
        }
        c => Err(Error::shape("1 or 2 channels", format!("{c} channel(s)"))),
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss of one pixel and `d loss / d p`.
fn pixel_ce(p: f64, positive: bool) -> (f64, f64) {
    let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let live = pc == p;
    if positive {
        (-pc.ln(), if live { -1.0 / pc } else { 0.0 })
    } else {
        (-(1.0 - pc).ln(), if live { 1.0 / (1.0 - pc) } else { 0.0 })
    }
}

/// Maps per-pixel `d loss / d p` back onto the prediction's channels.
fn to_input_grad(pred: &FeatureMap, pr: &Probs, dl_dp: &[f64]) -> FeatureMap {
    let plane = dl_dp.len();
    let mut g = FeatureMap::zeros(pred.channels(), pred.width(), pred.height());
    let data = g.data_mut();
    for k in 0..plane {
        let d = dl_dp[k] * pr.dp[k];
        if pr.logits {
            data[k] = -d;
            data[plane + k] = d;
        } else {
            data[k] = d;
        }
    }
    g
}

/// Indices of the negatives OHEM keeps, hardest first.
///
/// Ties in loss keep scan order so the selection is deterministic.
pub fn ohem_negatives(losses: &[f64], target: &BinaryMap) -> Vec<usize> {
    let mut neg: Vec<usize> = (0..losses.len()).filter(|&k| target.data()[k] == 0).collect();
    let npos = losses.len() - neg.len();
    let keep = if npos == 0 {
        OHEM_EMPTY_NEGATIVES.min(neg.len())
    } else {
        (OHEM_NEG_RATIO * npos).min(neg.len())
    };
    neg.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    neg.truncate(keep);
    neg
}

/// Mean cross-entropy over all positives and the hardest negatives at 1:3.
pub fn balanced_ce_ohem(pred: &FeatureMap, target: &BinaryMap) -> Result<f64> {
    balanced_ce_ohem_grad(pred, target).map(|(l, _)| l)
}

pub fn balanced_ce_ohem_grad(pred: &FeatureMap, target: &BinaryMap) -> Result<(f64, FeatureMap)> {
    let pr = probs(pred, target)?;
    let t = target.data();
    let per: Vec<(f64, f64)> = pr.p.iter().zip(t).map(|(&p, &y)| pixel_ce(p, y == 1)).collect();
    let losses: Vec<f64> = per.iter().map(|l| l.0).collect();
    let mut selected: Vec<usize> = (0..t.len()).filter(|&k| t[k] == 1).collect();
    selected.extend(ohem_negatives(&losses, target));
    let mut dl_dp = vec![0.0; t.len()];
    if selected.is_empty() {
        return Ok((0.0, to_input_grad(pred, &pr, &dl_dp)));
    }
    let inv = 1.0 / selected.len() as f64;
    let mut loss = 0.0;
    for &k in &selected {
        loss += losses[k];
        dl_dp[k] = per[k].1 * inv;
    }
    Ok((loss * inv, to_input_grad(pred, &pr, &dl_dp)))
}

/// `(0.75 * sum_pos(-ln p) + 0.25 * sum_neg(-ln(1 - p))) / pixels`.
pub fn balanced_ce_tc(pred: &FeatureMap, target: &BinaryMap) -> Result<f64> {
    balanced_ce_tc_grad(pred, target).map(|(l, _)| l)
}

pub fn balanced_ce_tc_grad(pred: &FeatureMap, target: &BinaryMap) -> Result<(f64, FeatureMap)> {
    let pr = probs(pred, target)?;
    let t = target.data();
    let n = t.len();
    if n == 0 {
        return Ok((0.0, pred.map(|_| 0.0)));
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut dl_dp = vec![0.0; n];
    for k in 0..n {
        let pos = t[k] == 1;
        let w = if pos { TC_POS_WEIGHT } else { 1.0 - TC_POS_WEIGHT };
        let (l, d) = pixel_ce(pr.p[k], pos);
        loss += w * l;
        dl_dp[k] = w * d * inv;
    }
    Ok((loss * inv, to_input_grad(pred, &pr, &dl_dp)))
}

/// Mean smoothed L1 over pixels (and channels) where `mask` is set.
/// An empty mask gives 0.
pub fn smooth_l1(pred: &FeatureMap, target: &FeatureMap, mask: &BinaryMap) -> Result<f64> {
    smooth_l1_grad(pred, target, mask).map(|(l, _)| l)
}

pub fn smooth_l1_grad(pred: &FeatureMap, target: &FeatureMap, mask: &BinaryMap) -> Result<(f64, FeatureMap)> {
    pred.check_same_shape(target)?;
    mask.check_spatial(pred)?;
    let plane = pred.width() * pred.height();
    let count = mask.count_ones() * pred.channels();
    let mut grad = FeatureMap::zeros(pred.channels(), pred.width(), pred.height());
    if count == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    let g = grad.data_mut();
    for (k, (a, b)) in pred.data().iter().zip(target.data()).enumerate() {
        if mask.data()[k % plane] == 0 {
            continue;
        }
        let d = a - b;
        if d.abs() < 1.0 {
            loss += 0.5 * d * d;
            g[k] = d * inv;
        } else {
            loss += d.abs() - 0.5;
            g[k] = d.signum() * inv;
        }
    }
    Ok((loss * inv, grad))
}

/// The five loss terms and their weighted total.
///
/// The gradient of `total` with respect to a term is that term's weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    pub l_tr: f64,
    pub l_tc: f64,
    pub l_th: f64,
    pub l_ta: f64,
    pub l_tm: f64,
    pub total: f64,
    pub weights: [f64; 5],
}

impl LossBundle {
    pub fn components(&self) -> [f64; 5] {
        [self.l_tr, self.l_tc, self.l_th, self.l_ta, self.l_tm]
    }
}

/// Combines `[l_tr, l_tc, l_th, l_ta, l_tm]` with `weights`.
pub fn total_loss(components: [f64; 5], weights: [f64; 5]) -> Result<LossBundle> {
    const NAMES: [&str; 5] = ["l_tr", "l_tc", "l_th", "l_ta", "l_tm"];
    for (name, v) in NAMES.iter().zip(&components) {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss component {name}")));
        }
    }
    if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::NonFinite(format!("loss weight {}", k + 1)));
    }
    let total = components.iter().zip(&weights).map(|(c, w)| c * w).sum();
    let [l_tr, l_tc, l_th, l_ta, l_tm] = components;
    Ok(LossBundle {
        l_tr,
        l_tc,
        l_th,
        l_ta,
        l_tm,
        total,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probs1(w: usize, h: usize, v: &[f64]) -> FeatureMap {
        FeatureMap::from_vec(1, w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_half_is_ln2() {
        let target = BinaryMap::from_fn(8, 8, |x, y| (x + y) % 3 == 0);
        let logits = FeatureMap::zeros(2, 8, 8);
        assert!((balanced_ce_ohem(&logits, &target).unwrap() - 2f64.ln()).abs() < 1e-6);
        let p = FeatureMap::filled(1, 8, 8, 0.5);
        assert!((balanced_ce_ohem(&p, &target).unwrap() - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let target = BinaryMap::from_fn(6, 6, |x, _| x < 2);
        let p = FeatureMap::from_fn(1, 6, 6, |_, x, _| if x < 2 { 1.0 } else { 0.0 });
        assert!(balanced_ce_ohem(&p, &target).unwrap() < 1e-5);
    }

    #[test]
    fn ohem_four_positives_keep_twelve_hardest() {
        // 104 pixels: 4 positives, 100 negatives with distinct losses
        let w = 13;
        let h = 8;
        let target = BinaryMap::from_fn(w, h, |x, y| y == 0 && x < 4);
        let mut vals = vec![0.0; w * h];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = if k < 4 {
                0.6 + 0.05 * k as f64
            } else {
                ((k * 37) % 100) as f64 / 101.0 + 0.001
            };
        }
        let pred = probs1(w, h, &vals);
        let mut neg_losses: Vec<f64> = (4..w * h).map(|k| -(1.0 - vals[k]).ln()).collect();
        neg_losses.sort_by(|a, b| b.total_cmp(a));
        let pos: f64 = (0..4).map(|k| -(vals[k] as f64).ln()).sum();
        let expected = (pos + neg_losses[..12].iter().sum::<f64>()) / 16.0;
        assert!((balanced_ce_ohem(&pred, &target).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ohem_without_positives_uses_hundred_hardest() {
        let target = BinaryMap::zeros(20, 10);
        let vals: Vec<f64> = (0..200).map(|k| k as f64 / 400.0).collect();
        let pred = probs1(20, 10, &vals);
        let expected: f64 = (100..200).map(|k| -(1.0 - vals[k]).ln()).sum::<f64>() / 100.0;
        assert!((balanced_ce_ohem(&pred, &target).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ohem_with_few_negatives_uses_all() {
        let target = BinaryMap::from_fn(4, 1, |x, _| x < 3);
        let pred = probs1(4, 1, &[0.9, 0.8, 0.7, 0.4]);
        let expected = (-(0.9f64.ln()) - 0.8f64.ln() - 0.7f64.ln() - 0.6f64.ln()) / 4.0;
        assert!((balanced_ce_ohem(&pred, &target).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn tc_balancing_analytic_cases() {
        let p = 0.3;
        let all_pos = BinaryMap::from_fn(3, 3, |_, _| true);
        let all_neg = BinaryMap::zeros(3, 3);
        let pred = FeatureMap::filled(1, 3, 3, p);
        assert!((balanced_ce_tc(&pred, &all_pos).unwrap() - 0.75 * -p.ln()).abs() < 1e-12);
        assert!((balanced_ce_tc(&pred, &all_neg).unwrap() - 0.25 * -(1.0 - p).ln()).abs() < 1e-12);
    }

    #[test]
    fn tc_mixed_two_by_two() {
        let target = BinaryMap::from_vec(2, 2, vec![1, 0, 0, 1]).unwrap();
        let pred = probs1(2, 2, &[0.9, 0.2, 0.4, 0.6]);
        let hand = (0.75 * (-(0.9f64).ln() - 0.6f64.ln()) + 0.25 * (-(0.8f64).ln() - 0.6f64.ln())) / 4.0;
        assert!((balanced_ce_tc(&pred, &target).unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let target = BinaryMap::zeros(3, 3);
        assert!(matches!(
            balanced_ce_tc(&FeatureMap::zeros(2, 4, 3), &target),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            balanced_ce_ohem(&FeatureMap::zeros(3, 3, 3), &target),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn smooth_l1_cases() {
        let mask = BinaryMap::from_fn(3, 1, |x, _| x == 1);
        let t = FeatureMap::zeros(1, 3, 1);
        let half = probs1(3, 1, &[9.0, 0.5, -4.0]);
        assert_eq!(smooth_l1(&half, &t, &mask).unwrap(), 0.125);
        let three = FeatureMap::from_vec(1, 3, 1, vec![0.0, 3.0, 0.0]).unwrap();
        assert_eq!(smooth_l1(&three, &t, &mask).unwrap(), 2.5);
        assert_eq!(smooth_l1(&t, &t, &mask).unwrap(), 0.0);
        assert_eq!(smooth_l1(&three, &t, &BinaryMap::zeros(3, 1)).unwrap(), 0.0);
    }

    #[test]
    fn total_loss_weighting() {
        assert_eq!(total_loss([1.0; 5], DEFAULT_WEIGHTS).unwrap().total, 6.0);
        assert_eq!(total_loss([0.0; 5], DEFAULT_WEIGHTS).unwrap().total, 0.0);
        let b = total_loss([0.5, 0.2, 0.1, 0.1, 0.3], DEFAULT_WEIGHTS).unwrap();
        assert!((b.total - 1.4).abs() < 1e-12);
        assert!(matches!(
            total_loss([0.0, f64::NAN, 0.0, 0.0, 0.0], DEFAULT_WEIGHTS),
            Err(Error::NonFinite(_))
        ));
    }

    /// Central differences of `f` at every input value, relative check.
    fn check_fd(pred: &FeatureMap, grad: &FeatureMap, f: impl Fn(&FeatureMap) -> f64) {
        let h = 1e-6;
        for k in 0..pred.len() {
            let mut a = pred.clone();
            let mut b = pred.clone();
            a.data_mut()[k] += h;
            b.data_mut()[k] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            let an = grad.data()[k];
            let scale = an.abs().max(fd.abs()).max(1e-3);
            assert!((fd - an).abs() / scale < 1e-5, "pixel {k}: analytic {an}, numeric {fd}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gradients_match_finite_differences(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = BinaryMap::from_fn(6, 5, |_, _| rng.gen_bool(0.3));
            let logits = FeatureMap::from_fn(2, 6, 5, |_, _, _| rng.gen_range(-3.0..3.0));
            let (_, g) = balanced_ce_tc_grad(&logits, &target).unwrap();
            check_fd(&logits, &g, |m| balanced_ce_tc(m, &target).unwrap());
            let (_, g) = balanced_ce_ohem_grad(&logits, &target).unwrap();
            check_fd(&logits, &g, |m| balanced_ce_ohem(m, &target).unwrap());
            let tgt = FeatureMap::from_fn(1, 6, 5, |_, _, _| rng.gen_range(-2.0..2.0));
            let pred = FeatureMap::from_fn(1, 6, 5, |_, _, _| rng.gen_range(-2.0..2.0));
            let (_, g) = smooth_l1_grad(&pred, &tgt, &target).unwrap();
            check_fd(&pred, &g, |m| smooth_l1(m, &tgt, &target).unwrap());
        }

        #[test]
        fn ohem_matches_sort_oracle(seed in any::<u64>(), npos in 0usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = BinaryMap::from_fn(16, 12, |x, y| y * 16 + x < npos);
            let losses: Vec<f64> = (0..192).map(|_| rng.gen_range(0.0..5.0)).collect();
            let picked = ohem_negatives(&losses, &target);
            let mut negs: Vec<(f64, usize)> = (npos..192).map(|k| (losses[k], k)).collect();
            negs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let k = if npos == 0 { 100 } else { (3 * npos).min(negs.len()) };
            let oracle: Vec<usize> = negs[..k].iter().map(|p| p.1).collect();
            prop_assert_eq!(picked, oracle);
        }

        #[test]
        fn losses_are_non_negative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = BinaryMap::from_fn(5, 5, |_, _| rng.gen_bool(0.5));
            let p = FeatureMap::from_fn(1, 5, 5, |_, _, _| rng.gen_range(0.0..=1.0));
            prop_assert!(balanced_ce_tc(&p, &target).unwrap() >= 0.0);
            prop_assert!(balanced_ce_ohem(&p, &target).unwrap() >= 0.0);
        }
    }
}
