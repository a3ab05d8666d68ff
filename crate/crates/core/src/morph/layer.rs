use crate::error::{Error, Result};
use crate::map::FeatureMap;

use super::kernel::{apply, route_backward, ArgCache, MorphKind};
use super::se::StructElem;

/// One dilation or erosion with its structuring element.
///
/// `forward` records the winning offsets; the next `backward` consumes them.
#[derive(Debug, Clone)]
pub struct MorphLayer {
    kind: MorphKind,
    se: StructElem,
    cache: Option<ArgCache>,
}

impl MorphLayer {
    pub fn new(kind: MorphKind, se: StructElem) -> Self {
        MorphLayer { kind, se, cache: None }
    }

    pub fn kind(&self) -> MorphKind {
        self.kind
    }

    pub fn se(&self) -> &StructElem {
        &self.se
    }

    pub fn se_mut(&mut self) -> &mut StructElem {
        &mut self.se
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn forward(&mut self, input: &FeatureMap) -> Result<FeatureMap> {
        let (out, cache) = apply(self.kind, input, &self.se)?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Accumulates the SE gradient and returns the input gradient.
    pub fn backward(&mut self, upstream: &FeatureMap) -> Result<FeatureMap> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::StaleCache("no forward pass recorded on this layer".into()))?;
        let mut g = vec![0.0; self.se.weights().len()];
        let grad_in = route_backward(self.kind, &cache, upstream, &mut g)?;
        self.se.accumulate_grad(&g);
        Ok(grad_in)
    }

    /// Stateless forward for callers that keep their own caches.
    pub fn forward_traced(&self, input: &FeatureMap) -> Result<(FeatureMap, ArgCache)> {
        apply(self.kind, input, &self.se)
    }

    /// Stateless backward; the SE gradient is added into `se_grad`.
    pub fn backward_traced(&self, cache: &ArgCache, upstream: &FeatureMap, se_grad: &mut [f64]) -> Result<FeatureMap> {
        route_backward(self.kind, cache, upstream, se_grad)
    }
}
