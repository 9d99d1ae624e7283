//! The three joint-action value heads.
//!
//! * [`MonotonicMixer`] — Q_tot. State-conditioned hypernetworks generate
//!   the mixing weights; taking their absolute value makes Q_tot monotone
//!   non-decreasing in every agent utility, which is what keeps per-agent
//!   greedy selection consistent with the joint argmax.
//! * [`CentralMixer`] — Q̂*, an unrestricted feedforward critic over the
//!   chosen utilities and the state.
//! * [`Recognizer`] — Q_r, a dueling-style head
//!   Σᵢ λ_i(s,a)·A_i + V(s) with λ_i ≥ 0, so Q_r(τ,a) ≤ V(s) with equality
//!   exactly when every agent played an individually-greedy action. Its
//!   λ scales are conditioned on the joint action, which is what lets it
//!   represent value patterns the monotonic head cannot.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamSet, Tensor};
use crate::nn::{Linear, Mlp};
use crate::Result;

#[derive(Debug, Clone)]
pub struct MixerConfig {
    pub n_agents: usize,
    pub state_dim: usize,
    /// Mixing embedding width.
    pub embed: usize,
    /// Hidden width of the hypernetworks and value heads.
    pub hyper_hidden: usize,
}

impl MixerConfig {
    pub fn new(n_agents: usize, state_dim: usize) -> Self {
        MixerConfig {
            n_agents,
            state_dim,
            embed: 32,
            hyper_hidden: 64,
        }
    }
}

/// Monotonic Q_tot mixer: |W2|ᵀ · ELU(|W1|ᵀ q + b1(s)) + V(s).
#[derive(Debug, Clone)]
pub struct MonotonicMixer {
    cfg: MixerConfig,
    hyper_w1: Mlp,
    hyper_b1: Linear,
    hyper_w2: Mlp,
    value: Mlp,
}

impl MonotonicMixer {
    pub fn init(ps: &mut ParamSet, rng: &mut ChaCha8Rng, cfg: MixerConfig) -> Self {
        let (s, h) = (cfg.state_dim, cfg.hyper_hidden);
        MonotonicMixer {
            hyper_w1: Mlp::init(ps, rng, s, h, cfg.n_agents * cfg.embed),
            hyper_b1: Linear::init(ps, rng, s, cfg.embed),
            hyper_w2: Mlp::init(ps, rng, s, h, cfg.embed),
            value: Mlp::init(ps, rng, s, h, 1),
            cfg,
        }
    }

    /// q: (B, n), state: (B, s_dim) → Q_tot (B, 1)
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, q: &Tensor, state: &Tensor) -> Result<Tensor> {
        let b = q.shape()[0];
        let (n, e) = (self.cfg.n_agents, self.cfg.embed);

        let w1 = self.hyper_w1.forward(g, ps, state)?;
        let w1 = g.abs(&w1);
        let w1 = g.reshape(&w1, vec![b, n, e])?;
        let b1 = self.hyper_b1.forward(g, ps, state)?;

        let q3 = g.reshape(q, vec![b, 1, n])?;
        let h = g.bmm(&q3, &w1)?;
        let h = g.reshape(&h, vec![b, e])?;
        let h = g.add(&h, &b1)?;
        let h = g.elu(&h);

        let w2 = self.hyper_w2.forward(g, ps, state)?;
        let w2 = g.abs(&w2);
        let w2 = g.reshape(&w2, vec![b, e, 1])?;
        let h3 = g.reshape(&h, vec![b, 1, e])?;
        let mixed = g.bmm(&h3, &w2)?;
        let mixed = g.reshape(&mixed, vec![b, 1])?;

        let v = self.value.forward(g, ps, state)?;
        g.add(&mixed, &v)
    }
}

/// Unrestricted central critic on concat(q_1..q_n, s).
#[derive(Debug, Clone)]
pub struct CentralMixer {
    fc1: Linear,
    fc2: Linear,
    head: Linear,
}

impl CentralMixer {
    pub fn init(ps: &mut ParamSet, rng: &mut ChaCha8Rng, cfg: MixerConfig) -> Self {
        let h = cfg.hyper_hidden;
        CentralMixer {
            fc1: Linear::init(ps, rng, cfg.n_agents + cfg.state_dim, h),
            fc2: Linear::init(ps, rng, h, h),
            head: Linear::init(ps, rng, h, 1),
        }
    }

    /// q: (B, n), state: (B, s_dim) → Q̂* (B, 1)
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, q: &Tensor, state: &Tensor) -> Result<Tensor> {
        let x = g.concat_last(&[q, state])?;
        let h = self.fc1.forward(g, ps, &x)?;
        let h = g.relu(&h);
        let h = self.fc2.forward(g, ps, &h)?;
        let h = g.relu(&h);
        self.head.forward(g, ps, &h)
    }

    #[cfg(test)]
    pub(crate) fn head_bias(&self) -> crate::autodiff::ParamId {
        self.head.b
    }
}

/// Q_r = Σᵢ λ_i(s,a)·A_i + V(s), λ_i ≥ 0 via absolute value.
#[derive(Debug, Clone)]
pub struct Recognizer {
    cfg: MixerConfig,
    /// Joint-action one-hot width (Σ|A_i|).
    pub joint_onehot_dim: usize,
    lambda_net: Mlp,
    value: Mlp,
}

impl Recognizer {
    pub fn init(ps: &mut ParamSet, rng: &mut ChaCha8Rng, cfg: MixerConfig, joint_onehot_dim: usize) -> Self {
        let (s, h) = (cfg.state_dim, cfg.hyper_hidden);
        Recognizer {
            lambda_net: Mlp::init(ps, rng, s + joint_onehot_dim, h, cfg.n_agents),
            value: Mlp::init(ps, rng, s, h, 1),
            joint_onehot_dim,
            cfg,
        }
    }

    /// advantages: (B, n) with entries ≤ 0, joint_onehot: (B, Σ|A_i|),
    /// state: (B, s_dim) → Q_r (B, 1).
    ///
    /// The advantage input is re-detached here; the recognizer never
    /// trains the individual utilities.
    pub fn forward(
        &self,
        g: &mut Graph,
        ps: &ParamSet,
        advantages: &Tensor,
        state: &Tensor,
        joint_onehot: &Tensor,
    ) -> Result<Tensor> {
        let lam = self.lambda(g, ps, state, joint_onehot)?;
        let scaled = g.mul(&lam, &advantages.detach())?;
        let sum = g.sum_last(&scaled);
        let v = self.value.forward(g, ps, state)?;
        g.add(&sum, &v)
    }

    /// Per-agent scales λ_i(s, a) ≥ 0.
    pub fn lambda(&self, g: &mut Graph, ps: &ParamSet, state: &Tensor, joint_onehot: &Tensor) -> Result<Tensor> {
        let x = g.concat_last(&[state, joint_onehot])?;
        let raw = self.lambda_net.forward(g, ps, &x)?;
        Ok(g.abs(&raw))
    }

    pub fn state_value(&self, g: &mut Graph, ps: &ParamSet, state: &Tensor) -> Result<Tensor> {
        self.value.forward(g, ps, state)
    }

    pub fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }

    #[cfg(test)]
    pub(crate) fn lambda_bias(&self) -> crate::autodiff::ParamId {
        self.lambda_net.fc2.unwrap().b
    }
}

/// A_i(τ_i, a_i) = Q_i(o_i, a_i) − max over *available* a_i of Q_i.
///
/// `q` is row-major (rows, n_actions) host data; the result is one
/// advantage per row, always ≤ 0 and exactly 0 when the chosen action is
/// an individual argmax.
pub fn compute_advantages(q: &[f64], n_actions: usize, actions: &[usize], avail: &[bool]) -> Vec<f64> {
    let rows = actions.len();
    debug_assert_eq!(q.len(), rows * n_actions);
    debug_assert_eq!(avail.len(), rows * n_actions);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &q[r * n_actions..(r + 1) * n_actions];
        let mask = &avail[r * n_actions..(r + 1) * n_actions];
        let mut best = f64::NEG_INFINITY;
        for (v, ok) in row.iter().zip(mask) {
            if *ok && *v > best {
                best = *v;
            }
        }
        out.push(row[actions[r]] - best);
    }
    out
}

/// Concatenated per-agent one-hot encoding of a joint action.
pub fn joint_action_onehot(joint: &[usize], n_actions: usize) -> Vec<f64> {
    let mut v = vec![0.0; joint.len() * n_actions];
    for (i, &a) in joint.iter().enumerate() {
        v[i * n_actions + a] = 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn mixer_cfg() -> MixerConfig {
        MixerConfig {
            n_agents: 2,
            state_dim: 3,
            embed: 8,
            hyper_hidden: 16,
        }
    }

    #[test]
    fn monotone_in_every_utility() {
        // perturbation sweep over random parameter draws and states
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..1000 {
            let mut ps = ParamSet::new();
            let mixer = MonotonicMixer::init(&mut ps, &mut rng, mixer_cfg());
            let state = Tensor::from_vec(vec![1, 3], (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let q0: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let agent = trial % 2;
            let mut q1 = q0.clone();
            q1[agent] += 0.1;

            let mut g = Graph::no_grad();
            let y0 = mixer
                .forward(&mut g, &ps, &Tensor::from_vec(vec![1, 2], q0), &state)
                .unwrap()
                .item();
            let y1 = mixer
                .forward(&mut g, &ps, &Tensor::from_vec(vec![1, 2], q1), &state)
                .unwrap()
                .item();
            assert!(y1 >= y0 - 1e-12, "trial {trial}: {y1} < {y0}");
        }
    }

    #[test]
    fn central_zero_weights_is_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamSet::new();
        let mixer = CentralMixer::init(&mut ps, &mut rng, mixer_cfg());
        for i in 0..ps.len() {
            for v in ps.values_mut(crate::autodiff::ParamId(i)) {
                *v = 0.0;
            }
        }
        for v in ps.values_mut(mixer.head_bias()) {
            *v = 2.5;
        }
        let mut g = Graph::no_grad();
        let q = Tensor::from_vec(vec![2, 2], vec![1.0, -7.0, 3.0, 0.0]);
        let s = Tensor::from_vec(vec![2, 3], vec![0.5; 6]);
        let y = mixer.forward(&mut g, &ps, &q, &s).unwrap();
        assert_eq!(y.values(), &[2.5, 2.5]);
    }

    #[test]
    fn central_can_decrease_when_a_utility_increases() {
        // search random inits for a non-monotone witness
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut found = false;
        'outer: for _ in 0..50 {
            let mut ps = ParamSet::new();
            let mixer = CentralMixer::init(&mut ps, &mut rng, mixer_cfg());
            let s = Tensor::from_vec(vec![1, 3], vec![0.3, -0.2, 0.9]);
            for _ in 0..50 {
                let q0: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let mut q1 = q0.clone();
                q1[rng.gen_range(0..2)] += 0.5;
                let mut g = Graph::no_grad();
                let y0 = mixer
                    .forward(&mut g, &ps, &Tensor::from_vec(vec![1, 2], q0), &s)
                    .unwrap()
                    .item();
                let y1 = mixer
                    .forward(&mut g, &ps, &Tensor::from_vec(vec![1, 2], q1), &s)
                    .unwrap()
                    .item();
                if y1 < y0 - 1e-9 {
                    found = true;
                    break 'outer;
                }
            }
        }
        assert!(found, "no non-monotone witness found for the central mixer");
    }

    #[test]
    fn advantages_zero_at_argmax_and_negative_otherwise() {
        let q = [0.041, -0.150, -0.051];
        let avail = [true, true, true];
        let at_max = compute_advantages(&q, 3, &[0], &avail);
        assert_eq!(at_max, vec![0.0]);
        let at_b = compute_advantages(&q, 3, &[1], &avail);
        assert!((at_b[0] + 0.191).abs() < 1e-12);
        let equal = compute_advantages(&[2.0, 2.0, 2.0], 3, &[2], &avail);
        assert_eq!(equal, vec![0.0]);
    }

    #[test]
    fn advantages_respect_availability_mask() {
        // the masked-out best action does not enter the max
        let q = [9.0, 1.0, 0.5];
        let avail = [false, true, true];
        let adv = compute_advantages(&q, 3, &[1], &avail);
        assert_eq!(adv, vec![0.0]);
    }

    #[test]
    fn recognizer_equals_state_value_at_zero_advantages() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::new();
        let rec = Recognizer::init(&mut ps, &mut rng, mixer_cfg(), 6);
        let mut g = Graph::no_grad();
        let s = Tensor::from_vec(vec![1, 3], vec![0.1, 0.2, 0.3]);
        let onehot = Tensor::from_vec(vec![1, 6], joint_action_onehot(&[0, 1], 3));
        let adv = Tensor::from_vec(vec![1, 2], vec![0.0, 0.0]);
        let qr = rec.forward(&mut g, &ps, &adv, &s, &onehot).unwrap().item();
        let v = rec.state_value(&mut g, &ps, &s).unwrap().item();
        assert!((qr - v).abs() < 1e-12);
    }

    #[test]
    fn recognizer_never_exceeds_state_value() {
        // structural ceiling: λ ≥ 0 and A ≤ 0 ⇒ Q_r ≤ V(s)
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let mut ps = ParamSet::new();
            let rec = Recognizer::init(&mut ps, &mut rng, mixer_cfg(), 6);
            let mut g = Graph::no_grad();
            let s = Tensor::from_vec(vec![1, 3], (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let joint = [rng.gen_range(0..3), rng.gen_range(0..3)];
            let onehot = Tensor::from_vec(vec![1, 6], joint_action_onehot(&joint, 3));
            let adv = Tensor::from_vec(vec![1, 2], vec![-rng.gen_range(0.0..4.0), -rng.gen_range(0.0..4.0)]);
            let qr = rec.forward(&mut g, &ps, &adv, &s, &onehot).unwrap().item();
            let v = rec.state_value(&mut g, &ps, &s).unwrap().item();
            assert!(qr <= v + 1e-12);
        }
    }

    #[test]
    fn recognizer_forced_lambda_one_sums_advantages() {
        // λ ≡ 1, V = 0 → Q_r = ΣA_i
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ps = ParamSet::new();
        let rec = Recognizer::init(&mut ps, &mut rng, mixer_cfg(), 6);
        for i in 0..ps.len() {
            for v in ps.values_mut(crate::autodiff::ParamId(i)) {
                *v = 0.0;
            }
        }
        for v in ps.values_mut(rec.lambda_bias()) {
            *v = 1.0;
        }
        let mut g = Graph::no_grad();
        let s = Tensor::from_vec(vec![1, 3], vec![0.0; 3]);
        let onehot = Tensor::from_vec(vec![1, 6], joint_action_onehot(&[2, 2], 3));
        let adv = Tensor::from_vec(vec![1, 2], vec![-1.0, -2.0]);
        let qr = rec.forward(&mut g, &ps, &adv, &s, &onehot).unwrap().item();
        assert!((qr + 3.0).abs() < 1e-12);
    }

    #[test]
    fn recognizer_loss_leaves_advantage_source_untouched() {
        // gradient isolation: the advantage input is detached, so a
        // backward pass reaches only recognizer parameters
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ps = ParamSet::new();
        let fake_agent_param = ps.alloc(vec![2], vec![0.5, -0.5]);
        let rec = Recognizer::init(&mut ps, &mut rng, mixer_cfg(), 6);

        let mut g = Graph::new();
        let agent_q = g.param(&ps, fake_agent_param);
        let adv = g.reshape(&agent_q, vec![1, 2]).unwrap();
        let s = Tensor::from_vec(vec![1, 3], vec![0.1, 0.0, -0.1]);
        let onehot = Tensor::from_vec(vec![1, 6], joint_action_onehot(&[0, 0], 3));
        let qr = rec.forward(&mut g, &ps, &adv, &s, &onehot).unwrap();
        let target = Tensor::from_vec(vec![1, 1], vec![4.0]);
        let err = g.sq_diff(&qr, &target).unwrap();
        let loss = g.sum_all(&err);
        let grads = g.backward(&loss).unwrap();
        assert!(grads.by_param(fake_agent_param).is_none());
        // and at least one recognizer parameter does receive gradient
        let any = (0..ps.len())
            .any(|i| i != fake_agent_param.0 && grads.by_param(crate::autodiff::ParamId(i)).is_some());
        assert!(any);
    }
}
