//! The per-seed training loop: rounds of rollouts feeding the replay
//! buffer, one optimization step per round once warm, periodic target
//! refresh. A run is a pure function of (configs, seed).

use rand_chacha::ChaCha8Rng;

use super::episode::EpisodeBatch;
use super::replay::ReplayBuffer;
use super::rollout::{stream_rng, RolloutSet};
use super::{train_step, Algo, ArProbe, NetworkConfig, Networks, TrainConfig, TrainMetrics};
use crate::autodiff::{AdamState, ParamSet};
use crate::env::EnvConfig;
use crate::Result;

// RNG stream layout per seed: 0 = init, 1 = batch sampling,
// 2.. = training episodes, EVAL_BASE.. = evaluation episodes.
const STREAM_INIT: u64 = 0;
const STREAM_SAMPLING: u64 = 1;
const STREAM_EPISODES: u64 = 2;
const STREAM_EVAL_BASE: u64 = 1 << 40;

pub struct Trainer {
    pub env_cfg: EnvConfig,
    pub cfg: TrainConfig,
    pub nets: Networks,
    pub target_params: ParamSet,
    pub adam: AdamState,
    pub buffer: ReplayBuffer,
    rollouts: RolloutSet,
    sample_rng: ChaCha8Rng,
    seed: u64,
    pub env_steps: usize,
    pub train_steps: usize,
    episodes_done: u64,
    episodes_since_train: usize,
    ar_probe: Option<ArProbe>,
}

impl Trainer {
    pub fn new(
        env_cfg: EnvConfig,
        cfg: TrainConfig,
        algo: Algo,
        net_cfg: &NetworkConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut probe_env = env_cfg.build();
        let (n_agents, n_actions, obs_dim, state_dim) = (
            probe_env.n_agents(),
            probe_env.n_actions(),
            probe_env.obs_dim(),
            probe_env.state_dim(),
        );
        let ar_probe = env_cfg.as_matrix().map(|_| {
            let step = probe_env.reset(&mut stream_rng(seed, STREAM_INIT));
            ArProbe {
                state: step.state,
                obs: step.obs,
                avail: step.avail,
            }
        });

        let mut init_rng = stream_rng(seed, STREAM_INIT);
        let nets = Networks::init(algo, n_agents, n_actions, obs_dim, state_dim, net_cfg, &mut init_rng);
        let target_params = nets.params.clone();
        let adam = AdamState::new(&nets.params, cfg.lr);
        let buffer = ReplayBuffer::new(cfg.buffer_capacity);
        let rollouts = RolloutSet::new(&env_cfg, cfg.rollout_streams);
        Ok(Trainer {
            env_cfg,
            nets,
            target_params,
            adam,
            buffer,
            rollouts,
            sample_rng: stream_rng(seed, STREAM_SAMPLING),
            seed,
            env_steps: 0,
            train_steps: 0,
            episodes_done: 0,
            episodes_since_train: 0,
            ar_probe,
            cfg,
        })
    }

    pub fn finished(&self) -> bool {
        self.env_steps >= self.cfg.total_env_steps
    }

    /// One round: a batch of fresh episodes, then at most one train step.
    pub fn round(&mut self) -> Result<Option<TrainMetrics>> {
        let epsilon = self.cfg.epsilon.at(self.env_steps);
        let streams = self.rollouts.streams();
        let mut rngs: Vec<ChaCha8Rng> = (0..streams as u64)
            .map(|i| stream_rng(self.seed, STREAM_EPISODES + self.episodes_done + i))
            .collect();
        let episodes = self
            .rollouts
            .run(&self.nets.agent, &self.nets.params, epsilon, &mut rngs)?;
        self.episodes_done += streams as u64;
        self.episodes_since_train += episodes.len();
        for ep in episodes {
            self.env_steps += ep.len;
            self.buffer.store(ep);
        }

        if self.buffer.len() < self.cfg.min_buffer_episodes
            || self.episodes_since_train < self.cfg.train_interval_episodes
        {
            return Ok(None);
        }
        self.episodes_since_train = 0;
        let sample = self.buffer.sample(self.cfg.batch_size, &mut self.sample_rng)?;
        let batch = EpisodeBatch::build(&sample, &self.nets.agent);
        let metrics = train_step(
            &mut self.nets,
            &self.target_params,
            &batch,
            &self.cfg,
            &mut self.adam,
            self.ar_probe.as_ref(),
        )?;
        self.train_steps += 1;
        if self.train_steps % self.cfg.target_interval == 0 {
            self.target_params = self.nets.params.clone();
        }
        Ok(Some(metrics))
    }

    /// Greedy evaluation: mean and standard deviation of the undiscounted
    /// return over `episodes` fresh episodes. `eval_index` keeps the RNG
    /// streams of successive evaluation points disjoint.
    pub fn evaluate(&self, episodes: usize, eval_index: u64) -> Result<(f64, f64)> {
        let eps = self.evaluate_episodes(episodes, eval_index)?;
        let returns: Vec<f64> = eps.iter().map(|e| e.total_reward()).collect();
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / returns.len() as f64;
        Ok((mean, var.sqrt()))
    }

    /// The raw greedy evaluation episodes, for callers that need more than
    /// return statistics.
    pub fn evaluate_episodes(&self, episodes: usize, eval_index: u64) -> Result<Vec<super::Episode>> {
        let mut set = RolloutSet::new(&self.env_cfg, episodes);
        let mut rngs: Vec<ChaCha8Rng> = (0..episodes as u64)
            .map(|j| stream_rng(self.seed, STREAM_EVAL_BASE + (eval_index << 20) + j))
            .collect();
        set.run(&self.nets.agent, &self.nets.params, 0.0, &mut rngs)
    }

    /// Greedy joint action at the enumerable decision point, if any.
    pub fn greedy_at_probe(&self) -> Result<Option<Vec<usize>>> {
        let Some(probe) = &self.ar_probe else {
            return Ok(None);
        };
        let q = self.nets.utilities_at(&self.nets.params, &probe.obs, None)?;
        let qrefs: Vec<&[f64]> = q.iter().map(|v| v.as_slice()).collect();
        let masks: Vec<&[bool]> = probe.avail.iter().map(|m| m.as_slice()).collect();
        Ok(Some(crate::agents::greedy_joint_action(&qrefs, &masks)?))
    }

    pub fn ar_probe(&self) -> Option<&ArProbe> {
        self.ar_probe.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}
