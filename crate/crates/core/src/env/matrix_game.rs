//! One-step two-player matrix game. The classic hard instance has payoff
//! rows (8, −12, −12 / −12, 0, 0 / −12, 0, 7.9): the optimum sits on a
//! narrow peak surrounded by punishments, which monotonic factorizations
//! cannot represent.

use rand_chacha::ChaCha8Rng;

use super::{EnvStep, Environment};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct MatrixGameConfig {
    /// payoff[a1][a2], rectangular.
    pub payoff: Vec<Vec<f64>>,
}

impl MatrixGameConfig {
    /// The strongly non-monotonic default instance.
    pub fn hard() -> Self {
        MatrixGameConfig {
            payoff: vec![
                vec![8.0, -12.0, -12.0],
                vec![-12.0, 0.0, 0.0],
                vec![-12.0, 0.0, 7.9],
            ],
        }
    }

    pub fn rows(&self) -> usize {
        self.payoff.len()
    }

    pub fn cols(&self) -> usize {
        self.payoff[0].len()
    }
}

#[derive(Debug)]
pub struct MatrixGame {
    cfg: MatrixGameConfig,
    done: bool,
}

impl MatrixGame {
    pub fn new(cfg: MatrixGameConfig) -> Self {
        assert!(!cfg.payoff.is_empty() && !cfg.payoff[0].is_empty());
        assert!(cfg.payoff.iter().all(|r| r.len() == cfg.payoff[0].len()));
        MatrixGame { cfg, done: false }
    }

    fn snapshot(&self, reward: f64, terminal: bool) -> EnvStep {
        EnvStep {
            state: vec![1.0],
            obs: vec![vec![1.0], vec![1.0]],
            reward,
            terminal,
            avail: vec![vec![true; self.cfg.rows()], vec![true; self.cfg.cols()]],
        }
    }
}

impl Environment for MatrixGame {
    fn n_agents(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        // symmetric action sets in every instance we run
        debug_assert_eq!(self.cfg.rows(), self.cfg.cols());
        self.cfg.rows()
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn episode_limit(&self) -> usize {
        1
    }

    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> EnvStep {
        self.done = false;
        self.snapshot(0.0, false)
    }

    fn step(&mut self, joint_action: &[usize], _rng: &mut ChaCha8Rng) -> Result<EnvStep> {
        assert_eq!(joint_action.len(), 2);
        let (a1, a2) = (joint_action[0], joint_action[1]);
        if a1 >= self.cfg.rows() {
            return Err(Error::ActionOutOfRange {
                agent: 0,
                action: a1,
                n_actions: self.cfg.rows(),
            });
        }
        if a2 >= self.cfg.cols() {
            return Err(Error::ActionOutOfRange {
                agent: 1,
                action: a2,
                n_actions: self.cfg.cols(),
            });
        }
        self.done = true;
        Ok(self.snapshot(self.cfg.payoff[a1][a2], true))
    }
}
