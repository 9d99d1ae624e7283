//! Per-agent individual action-value networks Q_i(τ_i, a_i) and
//! decentralized action selection.
//!
//! One parameter set is shared by all agents; each agent's input is its own
//! observation with its previous action and a one-hot agent id appended.
//! Batched forwards stack rows as `env_slot * n_agents + agent`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamSet, Tensor};
use crate::nn::{GruCell, Linear};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AgentNetConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub n_agents: usize,
    pub hidden: usize,
    /// Recurrent for partially observable tasks; feedforward for the
    /// stateless matrix game.
    pub recurrent: bool,
}

impl AgentNetConfig {
    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.n_actions + self.n_agents
    }
}

/// Q_i network shared across agents.
#[derive(Debug, Clone)]
pub struct AgentNet {
    pub cfg: AgentNetConfig,
    fc1: Linear,
    gru: Option<GruCell>,
    fc_mid: Option<Linear>,
    pub head: Linear,
}

impl AgentNet {
    pub fn init(ps: &mut ParamSet, rng: &mut ChaCha8Rng, cfg: AgentNetConfig) -> Self {
        let fc1 = Linear::init(ps, rng, cfg.input_dim(), cfg.hidden);
        let (gru, fc_mid) = if cfg.recurrent {
            (Some(GruCell::init(ps, rng, cfg.hidden, cfg.hidden)), None)
        } else {
            (None, Some(Linear::init(ps, rng, cfg.hidden, cfg.hidden)))
        };
        let head = Linear::init(ps, rng, cfg.hidden, cfg.n_actions);
        AgentNet { cfg, fc1, gru, fc_mid, head }
    }

    /// Fresh per-episode hidden state for `rows = batch · n_agents` rows,
    /// reset to zeros at episode start.
    pub fn initial_hidden(&self, rows: usize) -> Tensor {
        Tensor::zeros(vec![rows, self.cfg.hidden])
    }

    /// One step of utilities: inputs (rows, input_dim) → Q (rows, n_actions)
    /// plus the advanced hidden state. Availability is not applied here.
    pub fn forward_step(
        &self,
        g: &mut Graph,
        ps: &ParamSet,
        inputs: &Tensor,
        hidden: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        if inputs.shape().last() != Some(&self.cfg.input_dim()) {
            return Err(Error::ShapeMismatch {
                op: "agent_forward",
                lhs: inputs.shape().to_vec(),
                rhs: vec![self.cfg.input_dim()],
            });
        }
        let h1 = self.fc1.forward(g, ps, inputs)?;
        let h1 = g.relu(&h1);
        let (feat, new_hidden) = match (&self.gru, &self.fc_mid) {
            (Some(gru), _) => {
                let h = gru.forward(g, ps, &h1, hidden)?;
                (h.clone(), h)
            }
            (None, Some(mid)) => {
                let h = mid.forward(g, ps, &h1)?;
                let h = g.relu(&h);
                (h, hidden.clone())
            }
            _ => unreachable!(),
        };
        let q = self.head.forward(g, ps, &feat)?;
        Ok((q, new_hidden))
    }

    /// Flat input row for one agent: obs ++ one-hot(last action) ++
    /// one-hot(agent id). `last_action` is `None` at episode start.
    pub fn write_input_row(&self, buf: &mut Vec<f64>, obs: &[f64], last_action: Option<usize>, agent: usize) {
        assert_eq!(obs.len(), self.cfg.obs_dim, "observation length mismatch");
        buf.extend_from_slice(obs);
        let base = buf.len();
        buf.resize(base + self.cfg.n_actions + self.cfg.n_agents, 0.0);
        if let Some(a) = last_action {
            buf[base + a] = 1.0;
        }
        buf[base + self.cfg.n_actions + agent] = 1.0;
    }
}

/// Argmax over available actions, ties to the lowest index.
pub fn masked_argmax(q: &[f64], mask: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, (v, ok)) in q.iter().zip(mask).enumerate() {
        if !ok {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) if *v > q[b] => best = Some(i),
            _ => {}
        }
    }
    best.ok_or(Error::EmptyActionMask { agent: usize::MAX })
}

/// Per-agent greedy joint action â = [argmax_{a_i} Q_i]ᵢ.
pub fn greedy_joint_action(qvalues: &[&[f64]], masks: &[&[bool]]) -> Result<Vec<usize>> {
    qvalues
        .iter()
        .zip(masks)
        .enumerate()
        .map(|(agent, (q, m))| masked_argmax(q, m).map_err(|_| Error::EmptyActionMask { agent }))
        .collect()
}

/// ε-greedy: with probability ε a uniform draw over available actions,
/// otherwise the masked argmax.
pub fn select_actions(
    qvalues: &[&[f64]],
    masks: &[&[bool]],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    let mut joint = Vec::with_capacity(qvalues.len());
    for (agent, (q, m)) in qvalues.iter().zip(masks).enumerate() {
        let available: Vec<usize> = m
            .iter()
            .enumerate()
            .filter(|(_, ok)| **ok)
            .map(|(i, _)| i)
            .collect();
        if available.is_empty() {
            return Err(Error::EmptyActionMask { agent });
        }
        // draw even when ε = 0 so the RNG stream does not depend on ε
        let explore = rng.gen_range(0.0..1.0) < epsilon;
        if explore {
            joint.push(available[rng.gen_range(0..available.len())]);
        } else {
            joint.push(masked_argmax(q, m)?);
        }
    }
    Ok(joint)
}

/// Linear ε schedule from `start` down to `finish` over `anneal_steps`
/// environment steps.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub finish: f64,
    pub anneal_steps: usize,
}

impl EpsilonSchedule {
    pub fn at(&self, env_steps: usize) -> f64 {
        if self.anneal_steps == 0 {
            return self.finish;
        }
        let frac = (env_steps as f64 / self.anneal_steps as f64).min(1.0);
        self.start + (self.finish - self.start) * frac
    }
}
