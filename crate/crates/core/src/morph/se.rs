use crate::error::{Error, Result};
use crate::map::FeatureMap;

/// Non-flat structuring element: `C x M x N` additive weights plus their
/// accumulated gradient. `M` extends along map width, `N` along map height.
#[derive(Debug, Clone, PartialEq)]
pub struct StructElem {
    channels: usize,
    m: usize,
    n: usize,
    weights: Vec<f64>,
    grad: Vec<f64>,
}

impl StructElem {
    /// All-zero element; the starting point for trainable layers.
    pub fn zeros(channels: usize, m: usize, n: usize) -> Self {
        assert!(channels > 0 && m > 0 && n > 0, "structuring element extents must be positive");
        assert!(m * n <= u16::MAX as usize, "structuring element too large");
        let len = channels * m * n;
        StructElem {
            channels,
            m,
            n,
            weights: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    /// Weights in `(c, i, j)` row-major order.
    pub fn from_weights(channels: usize, m: usize, n: usize, weights: Vec<f64>) -> Result<Self> {
        let mut se = Self::zeros(channels, m, n);
        if weights.len() != se.weights.len() {
            return Err(Error::shape(se.weights.len(), weights.len()));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("structuring element weights".into()));
        }
        se.weights = weights;
        Ok(se)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.m, self.n)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn weight(&self, c: usize, i: usize, j: usize) -> f64 {
        self.weights[(c * self.m + i) * self.n + j]
    }

    pub fn set_weight(&mut self, c: usize, i: usize, j: usize, v: f64) {
        self.weights[(c * self.m + i) * self.n + j] = v;
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) {
        assert_eq!(g.len(), self.grad.len());
        for (acc, v) in self.grad.iter_mut().zip(g) {
            *acc += v;
        }
    }

    /// Weights laid out spatially: channel `c`, column `i`, row `j`.
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::from_fn(self.channels, self.m, self.n, |c, i, j| self.weight(c, i, j))
    }

    pub fn from_feature_map(map: &FeatureMap) -> Result<Self> {
        let (c, m, n) = map.shape();
        if c == 0 || m == 0 || n == 0 {
            return Err(Error::Checkpoint("empty structuring element record".into()));
        }
        let mut se = Self::zeros(c, m, n);
        for ch in 0..c {
            for i in 0..m {
                for j in 0..n {
                    se.set_weight(ch, i, j, map.get(ch, i, j));
                }
            }
        }
        Ok(se)
    }
}
