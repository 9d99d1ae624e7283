//! Lockstep episode generation.
//!
//! A [`RolloutSet`] owns one environment per stream and steps all live
//! streams together so the agent forward runs as one batched matmul per
//! step. Each stream draws from its own RNG, so the set of episodes a
//! round produces depends only on the parameter snapshot and the stream
//! RNG seeds, never on scheduling.

use rand_chacha::ChaCha8Rng;

use super::episode::Episode;
use crate::agents::{select_actions, AgentNet};
use crate::autodiff::{Graph, ParamSet, Tensor};
use crate::env::{EnvConfig, EnvStep, Environment};
use crate::Result;

pub struct RolloutSet {
    envs: Vec<Box<dyn Environment>>,
    episode_limit: usize,
}

impl RolloutSet {
    pub fn new(cfg: &EnvConfig, streams: usize) -> Self {
        assert!(streams > 0);
        let envs: Vec<Box<dyn Environment>> = (0..streams).map(|_| cfg.build()).collect();
        let episode_limit = envs[0].episode_limit();
        RolloutSet { envs, episode_limit }
    }

    pub fn streams(&self) -> usize {
        self.envs.len()
    }

    /// Runs one complete episode per stream under ε-greedy selection with
    /// the given parameter snapshot. `rngs` supplies one RNG per stream.
    pub fn run(
        &mut self,
        agent: &AgentNet,
        params: &ParamSet,
        epsilon: f64,
        rngs: &mut [ChaCha8Rng],
    ) -> Result<Vec<Episode>> {
        let r = self.envs.len();
        assert_eq!(rngs.len(), r);
        let n = agent.cfg.n_agents;
        let n_actions = agent.cfg.n_actions;
        let in_dim = agent.cfg.input_dim();

        let mut current: Vec<EnvStep> = Vec::with_capacity(r);
        let mut episodes: Vec<Episode> = Vec::with_capacity(r);
        for (env, rng) in self.envs.iter_mut().zip(rngs.iter_mut()) {
            let step = env.reset(rng);
            episodes.push(Episode {
                n_agents: n,
                n_actions,
                len: 0,
                states: vec![step.state.clone()],
                obs: vec![step.obs.clone()],
                avail: vec![step.avail.clone()],
                actions: Vec::new(),
                rewards: Vec::new(),
            });
            current.push(step);
        }
        let mut done = vec![false; r];
        let mut last_actions: Vec<Option<Vec<usize>>> = vec![None; r];
        let mut hidden = agent.initial_hidden(r * n);

        for _t in 0..self.episode_limit {
            if done.iter().all(|d| *d) {
                break;
            }
            let mut buf = Vec::with_capacity(r * n * in_dim);
            for (s, (step, last)) in current.iter().zip(&last_actions).enumerate() {
                let _ = s;
                for agent_idx in 0..n {
                    agent.write_input_row(
                        &mut buf,
                        &step.obs[agent_idx],
                        last.as_ref().map(|l| l[agent_idx]),
                        agent_idx,
                    );
                }
            }
            let inputs = Tensor::from_vec(vec![r * n, in_dim], buf);
            let mut g = Graph::no_grad();
            let (q, new_hidden) = agent.forward_step(&mut g, params, &inputs, &hidden)?;
            hidden = new_hidden;

            for s in 0..r {
                if done[s] {
                    continue;
                }
                let qrows: Vec<&[f64]> = (0..n)
                    .map(|i| &q.values()[(s * n + i) * n_actions..(s * n + i + 1) * n_actions])
                    .collect();
                let masks: Vec<&[bool]> = current[s].avail.iter().map(|m| m.as_slice()).collect();
                let joint = select_actions(&qrows, &masks, epsilon, &mut rngs[s])?;
                let step = self.envs[s].step(&joint, &mut rngs[s])?;

                let ep = &mut episodes[s];
                ep.actions.push(joint.clone());
                ep.rewards.push(step.reward);
                ep.states.push(step.state.clone());
                ep.obs.push(step.obs.clone());
                ep.avail.push(step.avail.clone());
                ep.len += 1;
                if step.terminal {
                    done[s] = true;
                }
                last_actions[s] = Some(joint);
                current[s] = step;
            }
        }
        debug_assert!(done.iter().all(|d| *d), "episode exceeded the environment limit");
        Ok(episodes)
    }
}

/// Seeded RNG on an independent stream; the (seed, stream) pair fully
/// determines the sequence.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
