use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::map::FeatureMap;
use crate::morph::{BlockTrace, MorphBlock};

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Jitter added to check inputs, uniform in `[0, JITTER)`.
pub const JITTER: f64 = 1e-3;

/// Scalar loss of a block output and its gradient with respect to that output.
pub type LossFn<'a> = dyn Fn(&FeatureMap) -> Result<(f64, FeatureMap)> + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_abs_dev: f64,
    pub checked: usize,
    pub skipped: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_abs_dev < self.tol
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.max_abs_dev = self.max_abs_dev.max(other.max_abs_dev);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

/// `sum(out * weights)` with a fixed weight map.
pub fn linear_loss(weights: FeatureMap) -> impl Fn(&FeatureMap) -> Result<(f64, FeatureMap)> + Sync {
    move |out: &FeatureMap| {
        out.check_same_shape(&weights)?;
        let v = out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        Ok((v, weights.clone()))
    }
}

fn winners(trace: &BlockTrace) -> Vec<&[u16]> {
    trace.caches().iter().map(|c| c.winners()).collect()
}

/// Central differences over every SE weight of `block`.
///
/// A coordinate whose perturbation by `10 * eps` in either direction changes
/// any layer's winner cache sits near a tie; it is skipped and counted.
pub fn grad_check(block: &MorphBlock, input: &FeatureMap, loss: &LossFn, eps: f64, tol: f64) -> Result<GradCheckReport> {
    let (out, trace) = block.forward_traced(input)?;
    let (_, g_out) = loss(&out)?;
    let (_, analytic) = block.backward_traced(&trace, &g_out)?;
    let base = winners(&trace);

    let mut probe = block.clone();
    let mut report = GradCheckReport {
        max_abs_dev: 0.0,
        checked: 0,
        skipped: 0,
        tol,
    };
    let eval = |b: &MorphBlock| -> Result<(f64, BlockTrace)> {
        let (o, t) = b.forward_traced(input)?;
        Ok((loss(&o)?.0, t))
    };
    for l in 0..block.layers().len() {
        for k in 0..block.layers()[l].se().weights().len() {
            let w0 = block.layers()[l].se().weights()[k];
            let mut tie = false;
            for delta in [10.0 * eps, -10.0 * eps] {
                probe.se_mut(l).weights_mut()[k] = w0 + delta;
                let (_, t) = eval(&probe)?;
                tie |= winners(&t) != base;
            }
            if tie {
                probe.se_mut(l).weights_mut()[k] = w0;
                report.skipped += 1;
                continue;
            }
            probe.se_mut(l).weights_mut()[k] = w0 + eps;
            let (lp, _) = eval(&probe)?;
            probe.se_mut(l).weights_mut()[k] = w0 - eps;
            let (lm, _) = eval(&probe)?;
            probe.se_mut(l).weights_mut()[k] = w0;
            let numeric = (lp - lm) / (2.0 * eps);
            report.max_abs_dev = report.max_abs_dev.max((numeric - analytic[l][k]).abs());
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Random block weights (distinct per offset) and a jittered random input for
/// one check instance.
pub fn random_instance(block: &mut MorphBlock, channels: usize, width: usize, height: usize, seed: u64) -> (FeatureMap, FeatureMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in block.layers_mut() {
        let n = l.se().weights().len();
        for (k, w) in l.se_mut().weights_mut().iter_mut().enumerate() {
            *w = rng.gen_range(-0.3..0.3) + 1e-2 * k as f64 / n as f64;
        }
    }
    let input = FeatureMap::from_fn(channels, width, height, |_, _, _| rng.gen_range(0.0..1.0) + rng.gen_range(0.0..JITTER));
    let weights = FeatureMap::from_fn(channels, width, height, |_, _, _| rng.gen_range(-1.0..1.0));
    (input, weights)
}
