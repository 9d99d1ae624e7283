//! Episode storage and batch assembly.
//!
//! An [`Episode`] keeps `len + 1` slots of state/observation/availability
//! (the trailing slot is the post-terminal view used for bootstrapping) and
//! `len` slots of action/reward. [`EpisodeBatch`] stacks a sampled batch
//! into time-major tensors, padded to the longest episode in the batch;
//! the filled mask is a prefix by construction.

use crate::agents::AgentNet;
use crate::autodiff::Tensor;
use crate::mixers::joint_action_onehot;

#[derive(Debug, Clone)]
pub struct Episode {
    pub n_agents: usize,
    pub n_actions: usize,
    /// Number of transitions.
    pub len: usize,
    /// len + 1 global states.
    pub states: Vec<Vec<f64>>,
    /// len + 1 × n_agents observations.
    pub obs: Vec<Vec<Vec<f64>>>,
    /// len + 1 × n_agents availability masks.
    pub avail: Vec<Vec<Vec<bool>>>,
    /// len joint actions.
    pub actions: Vec<Vec<usize>>,
    /// len shared rewards.
    pub rewards: Vec<f64>,
}

impl Episode {
    /// Undiscounted return.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Time-major batch view over sampled episodes.
pub struct EpisodeBatch {
    pub b: usize,
    pub t_max: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    /// t_max + 1 agent-input tensors of shape (B·n, input_dim).
    pub inputs: Vec<Tensor>,
    /// t_max + 1 state tensors of shape (B, state_dim).
    pub states: Vec<Tensor>,
    /// t_max + 1 availability masks, flattened (B·n·A).
    pub avail: Vec<Vec<bool>>,
    /// t_max action vectors, flattened (B·n).
    pub actions: Vec<Vec<usize>>,
    /// t_max joint-action one-hot tensors (B, n·A).
    pub joint_onehots: Vec<Tensor>,
    /// t_max reward vectors (B).
    pub rewards: Vec<Vec<f64>>,
    /// t_max filled masks (B), 1.0 where the episode has a transition.
    pub filled: Vec<Vec<f64>>,
    /// t_max terminal flags (B); transition t ended its episode.
    pub terminal: Vec<Vec<bool>>,
    /// Total filled transitions across the batch.
    pub filled_count: f64,
}

impl EpisodeBatch {
    pub fn build(episodes: &[&Episode], net: &AgentNet) -> Self {
        let b = episodes.len();
        assert!(b > 0);
        let n = episodes[0].n_agents;
        let n_actions = episodes[0].n_actions;
        let t_max = episodes.iter().map(|e| e.len).max().unwrap();
        let in_dim = net.cfg.input_dim();
        let state_dim = episodes[0].states[0].len();

        let mut inputs = Vec::with_capacity(t_max + 1);
        let mut states = Vec::with_capacity(t_max + 1);
        let mut avail = Vec::with_capacity(t_max + 1);
        for t in 0..=t_max {
            let mut in_buf = Vec::with_capacity(b * n * in_dim);
            let mut st_buf = Vec::with_capacity(b * state_dim);
            let mut av_buf = Vec::with_capacity(b * n * n_actions);
            for ep in episodes {
                let tt = t.min(ep.len); // clamp into the stored range for padding rows
                st_buf.extend_from_slice(&ep.states[tt]);
                for agent in 0..n {
                    let last = if t == 0 || t > ep.len {
                        None
                    } else {
                        Some(ep.actions[t - 1][agent])
                    };
                    net.write_input_row(&mut in_buf, &ep.obs[tt][agent], last, agent);
                    av_buf.extend(ep.avail[tt][agent].iter().copied());
                }
            }
            inputs.push(Tensor::from_vec(vec![b * n, in_dim], in_buf));
            states.push(Tensor::from_vec(vec![b, state_dim], st_buf));
            avail.push(av_buf);
        }

        let mut actions = Vec::with_capacity(t_max);
        let mut joint_onehots = Vec::with_capacity(t_max);
        let mut rewards = Vec::with_capacity(t_max);
        let mut filled = Vec::with_capacity(t_max);
        let mut terminal = Vec::with_capacity(t_max);
        let mut filled_count = 0.0;
        for t in 0..t_max {
            let mut act = Vec::with_capacity(b * n);
            let mut onehot = Vec::with_capacity(b * n * n_actions);
            let mut rew = Vec::with_capacity(b);
            let mut fil = Vec::with_capacity(b);
            let mut term = Vec::with_capacity(b);
            for ep in episodes {
                if t < ep.len {
                    act.extend(ep.actions[t].iter().copied());
                    onehot.extend(joint_action_onehot(&ep.actions[t], n_actions));
                    rew.push(ep.rewards[t]);
                    fil.push(1.0);
                    term.push(t == ep.len - 1);
                    filled_count += 1.0;
                } else {
                    act.extend(std::iter::repeat(0).take(n));
                    onehot.extend(std::iter::repeat(0.0).take(n * n_actions));
                    rew.push(0.0);
                    fil.push(0.0);
                    term.push(false);
                }
            }
            actions.push(act);
            joint_onehots.push(Tensor::from_vec(vec![b, n * n_actions], onehot));
            rewards.push(rew);
            filled.push(fil);
            terminal.push(term);
        }

        EpisodeBatch {
            b,
            t_max,
            n_agents: n,
            n_actions,
            inputs,
            states,
            avail,
            actions,
            joint_onehots,
            rewards,
            filled,
            terminal,
            filled_count,
        }
    }

    /// True when every filled transition is terminal (one-step games);
    /// bootstraps are then never consumed.
    pub fn all_terminal(&self) -> bool {
        self.filled
            .iter()
            .zip(&self.terminal)
            .all(|(f, t)| f.iter().zip(t).all(|(fi, ti)| *fi == 0.0 || *ti))
    }
}
