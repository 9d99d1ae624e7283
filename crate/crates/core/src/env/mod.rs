//! Desk-scale cooperative environments: the one-step matrix game and a
//! predator-prey grid world with mis-capture punishment.

mod matrix_game;
mod predator_prey;

pub use matrix_game::{MatrixGame, MatrixGameConfig};
pub use predator_prey::{PredatorPrey, PredatorPreyConfig};

use rand_chacha::ChaCha8Rng;

use crate::Result;

/// One environment transition as seen by the agents.
#[derive(Debug, Clone)]
pub struct EnvStep {
    /// Global state (training-time only).
    pub state: Vec<f64>,
    /// One observation per agent.
    pub obs: Vec<Vec<f64>>,
    /// Shared reward for the transition that produced this step (0 on reset).
    pub reward: f64,
    pub terminal: bool,
    /// Per-agent availability mask; always at least one `true` per agent.
    pub avail: Vec<Vec<bool>>,
}

pub trait Environment: Send {
    fn n_agents(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn episode_limit(&self) -> usize;
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> EnvStep;
    fn step(&mut self, joint_action: &[usize], rng: &mut ChaCha8Rng) -> Result<EnvStep>;
}

/// Which environment to build, with its parameters.
#[derive(Debug, Clone)]
pub enum EnvConfig {
    Matrix(MatrixGameConfig),
    PredatorPrey(PredatorPreyConfig),
}

impl EnvConfig {
    pub fn build(&self) -> Box<dyn Environment> {
        match self {
            EnvConfig::Matrix(cfg) => Box::new(MatrixGame::new(cfg.clone())),
            EnvConfig::PredatorPrey(cfg) => Box::new(PredatorPrey::new(cfg.clone())),
        }
    }

    /// Joint actions are enumerable only for the one-step matrix game.
    pub fn as_matrix(&self) -> Option<&MatrixGameConfig> {
        match self {
            EnvConfig::Matrix(cfg) => Some(cfg),
            _ => None,
        }
    }
}
