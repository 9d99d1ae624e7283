//! Small layer zoo over the autodiff engine: linear, MLP, and a gated
//! recurrent cell. Layers store [`ParamId`]s only; the actual values live
//! in the assembly's [`ParamSet`], so cloning a param set snapshots every
//! network at once.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamId, ParamSet, Tensor};
use crate::Result;

/// Uniform(−1/√fan_in, 1/√fan_in), the usual linear-layer default.
fn uniform_init(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn init(ps: &mut ParamSet, rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        let w = ps.alloc(vec![in_dim, out_dim], uniform_init(rng, in_dim, in_dim * out_dim));
        let b = ps.alloc(vec![out_dim], uniform_init(rng, in_dim, out_dim));
        Linear { w, b, in_dim, out_dim }
    }

    /// x: (rows, in_dim) → (rows, out_dim)
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let w = g.param(ps, self.w);
        let b = g.param(ps, self.b);
        let xw = g.matmul(x, &w)?;
        g.add(&xw, &b)
    }
}

/// Two-layer perceptron with ReLU in between; `hidden = 0` collapses to a
/// single linear map.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Option<Linear>,
}

impl Mlp {
    pub fn init(ps: &mut ParamSet, rng: &mut ChaCha8Rng, in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        if hidden == 0 {
            Mlp {
                fc1: Linear::init(ps, rng, in_dim, out_dim),
                fc2: None,
            }
        } else {
            Mlp {
                fc1: Linear::init(ps, rng, in_dim, hidden),
                fc2: Some(Linear::init(ps, rng, hidden, out_dim)),
            }
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let h = self.fc1.forward(g, ps, x)?;
        match &self.fc2 {
            None => Ok(h),
            Some(fc2) => {
                let h = g.relu(&h);
                fc2.forward(g, ps, &h)
            }
        }
    }
}

/// Gated recurrent cell. Gate layout along the last axis is [r | z | n].
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub wx: Linear,
    pub wh: Linear,
    pub hidden: usize,
}

impl GruCell {
    pub fn init(ps: &mut ParamSet, rng: &mut ChaCha8Rng, in_dim: usize, hidden: usize) -> Self {
        GruCell {
            wx: Linear::init(ps, rng, in_dim, 3 * hidden),
            wh: Linear::init(ps, rng, hidden, 3 * hidden),
            hidden,
        }
    }

    /// x: (rows, in_dim), h: (rows, hidden) → new hidden (rows, hidden)
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        let rows = x.shape()[0];
        let hd = self.hidden;
        let gx = self.wx.forward(g, ps, x)?;
        let gh = self.wh.forward(g, ps, h)?;
        let (rx, zx, nx) = split3(g, &gx, rows, hd)?;
        let (rh, zh, nh) = split3(g, &gh, rows, hd)?;

        let r_pre = g.add(&rx, &rh)?;
        let r = g.sigmoid(&r_pre);
        let z_pre = g.add(&zx, &zh)?;
        let z = g.sigmoid(&z_pre);
        let gated = g.mul(&r, &nh)?;
        let n_pre = g.add(&nx, &gated)?;
        let n = g.tanh(&n_pre);

        // h' = (1 − z)·n + z·h
        let zn = g.mul(&z, &n)?;
        let zh_old = g.mul(&z, h)?;
        let n_minus_zn = g.sub(&n, &zn)?;
        g.add(&n_minus_zn, &zh_old)
    }

    pub fn zero_state(rows: usize, hidden: usize) -> Tensor {
        Tensor::zeros(vec![rows, hidden])
    }
}

/// Splits (rows, 3h) into three (rows, h) tensors.
fn split3(g: &mut Graph, t: &Tensor, _rows: usize, h: usize) -> Result<(Tensor, Tensor, Tensor)> {
    Ok((
        g.slice_last(t, 0, h)?,
        g.slice_last(t, h, h)?,
        g.slice_last(t, 2 * h, h)?,
    ))
}
