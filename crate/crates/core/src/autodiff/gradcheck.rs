//! Central finite-difference gradient checking.
//!
//! The checker is independent of the tape: it only evaluates a closure at
//! perturbed parameter values, so it can serve as the reference for the
//! reverse pass.

use super::{ParamId, ParamSet};

/// Central-difference gradient of `f` with respect to every scalar in
/// `params`, using step `h`.
pub fn finite_difference_grads(
    params: &ParamSet,
    h: f64,
    f: impl Fn(&ParamSet) -> f64,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let n = params.get(ParamId(i)).len();
        let mut g = vec![0.0; n];
        for j in 0..n {
            let mut plus = params.clone();
            plus.values_mut(ParamId(i))[j] += h;
            let mut minus = params.clone();
            minus.values_mut(ParamId(i))[j] -= h;
            g[j] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Worst relative error between analytic and finite-difference gradients,
/// with an absolute floor so near-zero entries compare sanely.
pub fn max_relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.iter().zip(n) {
            let denom = x.abs().max(y.abs()).max(1.0);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
