//! Adam update with bias correction, plus global-norm gradient clipping.

use super::{ParamId, ParamSet};
use crate::{Error, Result};

/// Per-parameter grad buffers aligned with a [`ParamSet`]; `None` means the
/// parameter was unreachable from the loss this step.
pub type ParamGrads = Vec<Option<Vec<f64>>>;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            v: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One optimizer step. Missing gradients are treated as zero. Any NaN
    /// or infinite gradient aborts with a diagnostic naming the parameter.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamGrads) -> Result<()> {
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient { param: i });
                }
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let zero: Vec<f64> = Vec::new();
        for i in 0..params.len() {
            let g = grads.get(i).and_then(|g| g.as_ref()).unwrap_or(&zero);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let w = params.values_mut(ParamId(i));
            for j in 0..w.len() {
                let gj = g.get(j).copied().unwrap_or(0.0);
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                w[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Scales all gradients by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let sq: f64 = grads
        .iter()
        .flatten()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}
