//! Layer chains with an optional residual path.
//!
//! Every layer anchors its window at the output pixel, so a chain of windows
//! drifts towards the top-left by half the summed window extent. The block
//! evaluates the chain on a canvas extended by `floor(sum(M - 1) / 2)`
//! columns and `floor(sum(N - 1) / 2)` rows on the top-left, where only the
//! original pixels exist, and reads the result back at the shifted position.
//! A flat erosion/dilation chain is then a centred opening or closing.

use crate::error::{Error, Result};
use crate::map::FeatureMap;

use super::kernel::{self, ArgCache, MorphKind, Region};
use super::layer::MorphLayer;
use super::se::StructElem;

pub const DMOP_SE: usize = 2;
pub const DMOP_LAYERS: usize = 2;
pub const DMCL_SE: usize = 3;
pub const DMCL_LAYERS: usize = 4;

/// Slope of the logistic readout applied to block outputs.
pub const READOUT_GAIN: f64 = 16.0;

/// How a block output becomes a text probability.
///
/// The logit is `READOUT_GAIN * (y - bias - 0.5)` with `bias` 1 for
/// [`Readout::Intersect`] and 0 otherwise. On {0,1} inputs an opening block
/// with residual therefore keeps a pixel only where both the input and the
/// chain are on, and a closing block keeps a pixel where either is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// Chain output used directly (no residual).
    Direct,
    /// Residual opening: input and chain must agree.
    Intersect,
    /// Residual closing: input or chain suffices.
    Union,
}

impl Readout {
    pub fn bias(self) -> f64 {
        match self {
            Readout::Intersect => 1.0,
            Readout::Direct | Readout::Union => 0.0,
        }
    }

    pub fn logit(self, y: f64) -> f64 {
        READOUT_GAIN * (y - self.bias() - 0.5)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Readout::Direct => "direct",
            Readout::Intersect => "intersect",
            Readout::Union => "union",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "direct" => Some(Readout::Direct),
            "intersect" => Some(Readout::Intersect),
            "union" => Some(Readout::Union),
            _ => None,
        }
    }

    /// Two-channel logit map `[0, z]` for the class-balanced losses.
    pub fn logits(self, y: &FeatureMap) -> FeatureMap {
        let (c, w, h) = y.shape();
        assert_eq!(c, 1, "readout expects a single-channel block output");
        FeatureMap::from_fn(2, w, h, |ch, x, yy| if ch == 0 { 0.0 } else { self.logit(y.get(0, x, yy)) })
    }

    /// Chain rule through [`Readout::logits`]: only channel 1 depends on `y`.
    pub fn backward(self, grad_logits: &FeatureMap) -> FeatureMap {
        let (_, w, h) = grad_logits.shape();
        FeatureMap::from_fn(1, w, h, |_, x, y| READOUT_GAIN * grad_logits.get(1, x, y))
    }

    /// Binary decision equivalent to `sigmoid(logit) > 0.5`.
    pub fn decide(self, y: f64) -> bool {
        y - self.bias() > 0.5
    }
}

/// Per-layer caches of one forward pass.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    caches: Vec<ArgCache>,
    input_shape: (usize, usize, usize),
}

impl BlockTrace {
    pub fn caches(&self) -> &[ArgCache] {
        &self.caches
    }
}

#[derive(Debug, Clone)]
pub struct MorphBlock {
    layers: Vec<MorphLayer>,
    residual: bool,
    trainable: bool,
    readout: Readout,
    trace: Option<BlockTrace>,
    flip_backward: bool,
}

impl MorphBlock {
    pub fn new(layers: Vec<MorphLayer>, residual: bool, trainable: bool, readout: Readout) -> Self {
        MorphBlock {
            layers,
            residual,
            trainable,
            readout,
            trace: None,
            flip_backward: false,
        }
    }

    /// `layers` erosions followed by `layers` dilations, zero `se x se`
    /// elements, residual on.
    pub fn dmop(channels: usize, se: usize, layers: usize) -> Self {
        Self::new(
            chain(channels, se, layers, [MorphKind::Erosion, MorphKind::Dilation]),
            true,
            true,
            Readout::Intersect,
        )
    }

    /// `layers` dilations followed by `layers` erosions, zero `se x se`
    /// elements, residual on.
    pub fn dmcl(channels: usize, se: usize, layers: usize) -> Self {
        Self::new(
            chain(channels, se, layers, [MorphKind::Dilation, MorphKind::Erosion]),
            true,
            true,
            Readout::Union,
        )
    }

    /// Frozen flat opening: square all-ones support, zero additive height,
    /// no residual.
    pub fn classical_opening(channels: usize, se: usize, layers: usize) -> Self {
        Self::new(
            chain(channels, se, layers, [MorphKind::Erosion, MorphKind::Dilation]),
            false,
            false,
            Readout::Direct,
        )
    }

    /// Frozen flat closing, the counterpart of [`MorphBlock::classical_opening`].
    pub fn classical_closing(channels: usize, se: usize, layers: usize) -> Self {
        Self::new(
            chain(channels, se, layers, [MorphKind::Dilation, MorphKind::Erosion]),
            false,
            false,
            Readout::Direct,
        )
    }

    pub fn dmop_default(channels: usize) -> Self {
        Self::dmop(channels, DMOP_SE, DMOP_LAYERS)
    }

    pub fn dmcl_default(channels: usize) -> Self {
        Self::dmcl(channels, DMCL_SE, DMCL_LAYERS)
    }

    pub fn layers(&self) -> &[MorphLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [MorphLayer] {
        &mut self.layers
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    /// Test hook: negates every SE gradient produced by backward passes.
    #[doc(hidden)]
    pub fn set_corrupt_backward(&mut self, flip: bool) {
        self.flip_backward = flip;
    }

    /// Translation applied to the chain output, in (columns, rows).
    pub fn alignment(&self) -> (usize, usize) {
        let (sx, sy) = self
            .layers
            .iter()
            .fold((0, 0), |(a, b), l| (a + l.se().m() - 1, b + l.se().n() - 1));
        (sx / 2, sy / 2)
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.se_mut().zero_grad();
        }
    }

    pub fn se_grads(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| l.se().grad().to_vec()).collect()
    }

    /// Forward pass recording caches in the block.
    pub fn forward(&mut self, input: &FeatureMap) -> Result<FeatureMap> {
        let (out, trace) = self.forward_traced(input)?;
        self.trace = Some(trace);
        Ok(out)
    }

    /// Backward pass matching the last [`MorphBlock::forward`]; accumulates
    /// into every SE gradient and returns the input gradient.
    pub fn backward(&mut self, upstream: &FeatureMap) -> Result<FeatureMap> {
        let trace = self
            .trace
            .take()
            .ok_or_else(|| Error::StaleCache("no forward pass recorded on this block".into()))?;
        let (grad_in, grads) = self.backward_traced(&trace, upstream)?;
        for (layer, g) in self.layers.iter_mut().zip(&grads) {
            layer.se_mut().accumulate_grad(g);
        }
        Ok(grad_in)
    }

    pub fn forward_traced(&self, input: &FeatureMap) -> Result<(FeatureMap, BlockTrace)> {
        let (c, w, h) = input.shape();
        let (sx, sy) = self.alignment();
        let mut x = FeatureMap::from_fn(c, w + sx, h + sy, |ch, a, b| {
            if a >= sx && b >= sy {
                input.get(ch, a - sx, b - sy)
            } else {
                0.0
            }
        });
        let mut valid = Region {
            x0: sx,
            y0: sy,
            x1: sx + w,
            y1: sy + h,
        };
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            kernel::check_compatible(input, layer.se())?;
            let (out, cache) = kernel::apply_in_region(layer.kind(), &x, valid, layer.se())?;
            valid = cache.output_region;
            caches.push(cache);
            x = out;
        }
        debug_assert!(valid.x0 == 0 && valid.y0 == 0);
        let mut out = FeatureMap::from_fn(c, w, h, |ch, a, b| x.get(ch, a, b));
        if self.residual {
            out.add_assign(input)?;
        }
        Ok((
            out,
            BlockTrace {
                caches,
                input_shape: input.shape(),
            },
        ))
    }

    /// Returns the input gradient and one SE gradient per layer.
    pub fn backward_traced(&self, trace: &BlockTrace, upstream: &FeatureMap) -> Result<(FeatureMap, Vec<Vec<f64>>)> {
        if upstream.shape() != trace.input_shape || trace.caches.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "trace recorded {:?} over {} layer(s), upstream is {:?} over {} layer(s)",
                trace.input_shape,
                trace.caches.len(),
                upstream.shape(),
                self.layers.len()
            )));
        }
        let (c, w, h) = upstream.shape();
        let (sx, sy) = self.alignment();
        let mut g = FeatureMap::from_fn(c, w + sx, h + sy, |ch, a, b| {
            if a < w && b < h {
                upstream.get(ch, a, b)
            } else {
                0.0
            }
        });
        let mut grads: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.se().weights().len()]).collect();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            g = kernel::route_backward(layer.kind(), &trace.caches[k], &g, &mut grads[k])?;
        }
        let mut g = FeatureMap::from_fn(c, w, h, |ch, a, b| g.get(ch, a + sx, b + sy));
        if self.residual {
            g.add_assign(upstream)?;
        }
        if self.flip_backward {
            for v in grads.iter_mut().flatten() {
                *v = -*v;
            }
        }
        Ok((g, grads))
    }

    pub(crate) fn se_mut(&mut self, layer: usize) -> &mut StructElem {
        self.layers[layer].se_mut()
    }
}

fn chain(channels: usize, se: usize, layers: usize, order: [MorphKind; 2]) -> Vec<MorphLayer> {
    order
        .iter()
        .flat_map(|&kind| (0..layers).map(move |_| MorphLayer::new(kind, StructElem::zeros(channels, se, se))))
        .collect()
}
