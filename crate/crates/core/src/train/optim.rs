use crate::error::{Error, Result};
use crate::morph::StructElem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-SE optimizer memory: velocity for SGD, first/second moments for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub steps: u64,
}

impl SlotState {
    pub fn new(len: usize) -> Self {
        SlotState {
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: 0,
        }
    }
}

fn check_grad(se: &StructElem) -> Result<()> {
    if se.grad().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("structuring element gradient; step rejected".into()));
    }
    Ok(())
}

/// `v = momentum * v + g + wd * w; w -= lr * v`, then clears the gradient.
pub fn sgd_step(se: &mut StructElem, velocity: &mut [f64], lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
    check_grad(se)?;
    assert_eq!(velocity.len(), se.weights().len());
    let grad = se.grad().to_vec();
    for ((w, v), g) in se.weights_mut().iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g + weight_decay * *w;
        *w -= lr * *v;
    }
    se.zero_grad();
    Ok(())
}

/// Bias-corrected Adam with L2 weight decay folded into the gradient.
pub fn adam_step(se: &mut StructElem, state: &mut SlotState, lr: f64, weight_decay: f64, p: AdamParams) -> Result<()> {
    check_grad(se)?;
    state.steps += 1;
    let t = state.steps as f64;
    let (c1, c2) = (1.0 - p.beta1.powf(t), 1.0 - p.beta2.powf(t));
    let grad = se.grad().to_vec();
    for (k, (w, g)) in se.weights_mut().iter_mut().zip(grad).enumerate() {
        let g = g + weight_decay * *w;
        state.first[k] = p.beta1 * state.first[k] + (1.0 - p.beta1) * g;
        state.second[k] = p.beta2 * state.second[k] + (1.0 - p.beta2) * g * g;
        *w -= lr * (state.first[k] / c1) / ((state.second[k] / c2).sqrt() + p.eps);
    }
    se.zero_grad();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(w: f64, g: f64) -> StructElem {
        let mut se = StructElem::from_weights(1, 1, 1, vec![w]).unwrap();
        se.accumulate_grad(&[g]);
        se
    }

    #[test]
    fn zero_grad_without_decay_is_a_no_op() {
        let mut se = one(0.7, 0.0);
        let mut v = vec![0.0];
        sgd_step(&mut se, &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(se.weights(), &[0.7]);
    }

    #[test]
    fn single_unit_step() {
        let mut se = one(0.0, 1.0);
        let mut v = vec![0.0];
        sgd_step(&mut se, &mut v, 0.1, 0.0, 0.0).unwrap();
        assert!((se.weights()[0] + 0.1).abs() < 1e-15);
        assert_eq!(se.grad(), &[0.0]);
    }

    #[test]
    fn momentum_accumulates() {
        let mut se = one(0.0, 1.0);
        let mut v = vec![0.0];
        sgd_step(&mut se, &mut v, 0.1, 0.9, 0.0).unwrap();
        se.accumulate_grad(&[1.0]);
        sgd_step(&mut se, &mut v, 0.1, 0.9, 0.0).unwrap();
        assert!((se.weights()[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut se = one(0.0, f64::NAN);
        let mut v = vec![0.0];
        assert!(matches!(sgd_step(&mut se, &mut v, 0.1, 0.0, 0.0), Err(Error::NonFinite(_))));
        assert_eq!(se.weights(), &[0.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut se = one(0.0, 3.0);
        let mut st = SlotState::new(1);
        adam_step(&mut se, &mut st, 0.001, 0.0, AdamParams::default()).unwrap();
        assert!((se.weights()[0] + 0.001).abs() < 1e-9);
    }
}
